//! Potential fields: per-agent navigation fields built from predicted trends,
//! the static obstacle field and the per-step pedestrian field, plus their
//! scalar matrices.

mod astar;
mod matrix;
mod navigation;
mod repulsion;
mod trend;

use serde::{Deserialize, Serialize};

pub use astar::{astar, octile, step_cost, GridPath};
pub use matrix::{global_field, magnitude_matrix, FieldKind, FieldMatrix};
pub use navigation::{
    expand_field, field_to_matrix, raw_direction_vectors, CellOffset, DirectionEntry, DirectionField,
};
pub use repulsion::{
    obstacle_field, pedestrian_field, repulsion_kernel, FieldVector, PedestrianSweep, VectorField,
};
pub use trend::{interpolate_trend_line, sample_trend_points, TrendDistribution, TrendLine, TrendStep};

use crate::error::{Error, Result};
use crate::grid::{GridCoord, GridEnvironment};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldParams {
    /// Obstacle field range, cells.
    pub delta: f64,
    /// Pedestrian field range, cells.
    pub epsilon: f64,
    pub lambda_o: f64,
    pub lambda_h: f64,
    /// Navigation domain radius, cells.
    pub r: u32,
    /// Gradient scale factor.
    pub l: f64,
    /// Value at the destination.
    pub v_0: f64,
    /// Propagation weight for cells without a direction vector.
    pub kappa: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams {
            delta: 1.0,
            epsilon: 1.0,
            lambda_o: 1.0,
            lambda_h: 1.0,
            r: 4,
            l: 1.0,
            v_0: 0.0,
            kappa: 2.0,
        }
    }
}

impl FieldParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        if !(self.delta >= 1.0 && self.epsilon >= 1.0) {
            return Err(Error::invalid("field ranges must be at least one cell"));
        }
        positive("delta", self.delta)?;
        positive("epsilon", self.epsilon)?;
        positive("lambda_o", self.lambda_o)?;
        positive("lambda_h", self.lambda_h)?;
        positive("l", self.l)?;
        positive("kappa", self.kappa)?;
        if !(self.v_0 >= 0.0 && self.v_0.is_finite()) {
            return Err(Error::invalid(format!("v_0 must be finite and >= 0, got {}", self.v_0)));
        }
        Ok(())
    }
}

/// Everything built for one agent from one trend prediction.
#[derive(Debug, Clone)]
pub struct NavigationField {
    pub direction: DirectionField,
    pub matrix: FieldMatrix,
}

/// Sample -> interpolate -> raw vectors -> expand -> `M_F`.
///
/// Sampled points that cannot reach the destination (different connected
/// component) are dropped first; if none survive, the line is the
/// destination alone. `components` comes from [`GridEnvironment::components`].
pub fn build_navigation_field(
    dist: &TrendDistribution,
    destination: GridCoord,
    params: &FieldParams,
    env: &GridEnvironment,
    components: &[Option<u32>],
    sample_seed: u64,
    expand_seed: u64,
) -> Result<NavigationField> {
    let points = sample_trend_points(dist, env, sample_seed)?;
    let target = components[env.index(destination)];
    let mut reachable = Vec::with_capacity(points.len());
    for p in points {
        let c = trend::point_cell(env, p)?;
        if components[env.index(c)] == target {
            reachable.push(env.center(c));
        }
    }
    let line = interpolate_trend_line(&reachable, destination, env)?;
    let raw = raw_direction_vectors(&line);
    let direction = expand_field(&raw, &line, params.r, env, expand_seed);
    let matrix = field_to_matrix(&direction, destination, params, env)?;
    Ok(NavigationField { direction, matrix })
}
