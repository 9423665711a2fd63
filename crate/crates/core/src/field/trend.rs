//! Predicted movement trends: bivariate Gaussian position distributions, the
//! sampled trend points drawn from them, and their interpolation into a
//! connected trend line.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::astar::astar;
use crate::agent::AgentId;
use crate::error::{Error, Result};
use crate::grid::{GridCoord, GridEnvironment, WorldPoint};

/// Gaussian parameters for one future step. Serialized as
/// `[mu_x, mu_y, sigma_x, sigma_y, rho]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 5]", into = "[f64; 5]")]
pub struct TrendStep {
    pub mu: WorldPoint,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub rho: f64,
}

impl From<[f64; 5]> for TrendStep {
    fn from([mx, my, sx, sy, rho]: [f64; 5]) -> Self {
        TrendStep {
            mu: WorldPoint::new(mx, my),
            sigma_x: sx,
            sigma_y: sy,
            rho,
        }
    }
}

impl From<TrendStep> for [f64; 5] {
    fn from(s: TrendStep) -> Self {
        [s.mu.x, s.mu.y, s.sigma_x, s.sigma_y, s.rho]
    }
}

impl TrendStep {
    pub fn degenerate(mu: WorldPoint, sigma: f64) -> Self {
        TrendStep {
            mu,
            sigma_x: sigma,
            sigma_y: sigma,
            rho: 0.0,
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !self.mu.is_finite() {
            return Err("non-finite mean".into());
        }
        if !(self.sigma_x > 0.0 && self.sigma_x.is_finite() && self.sigma_y > 0.0 && self.sigma_y.is_finite()) {
            return Err(format!("sigma must be positive, got ({}, {})", self.sigma_x, self.sigma_y));
        }
        if self.rho.is_nan() || self.rho.abs() >= 1.0 {
            return Err(format!("|rho| must be < 1, got {}", self.rho));
        }
        Ok(())
    }

    /// Draws one point: `x = mu_x + sx·z1`, `y = mu_y + sy·(rho·z1 + sqrt(1-rho²)·z2)`.
    fn sample(&self, rng: &mut ChaCha8Rng) -> WorldPoint {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        WorldPoint::new(
            self.mu.x + self.sigma_x * z1,
            self.mu.y + self.sigma_y * (self.rho * z1 + (1.0 - self.rho * self.rho).sqrt() * z2),
        )
    }
}

/// Per-agent predicted position distributions for the next `T_p` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendDistribution {
    pub agent_id: AgentId,
    pub made_at_step: u64,
    pub steps: Vec<TrendStep>,
}

impl TrendDistribution {
    /// Checks the parameter constraints and, when given, the horizon length.
    pub fn validate(&self, horizon: Option<usize>) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::invalid(format!("agent {}: empty trend", self.agent_id)));
        }
        if let Some(t_p) = horizon {
            if self.steps.len() != t_p {
                return Err(Error::invalid(format!(
                    "agent {}: trend has {} steps, expected {t_p}",
                    self.agent_id,
                    self.steps.len()
                )));
            }
        }
        for (t, s) in self.steps.iter().enumerate() {
            s.check()
                .map_err(|m| Error::invalid(format!("agent {} step {}: {m}", self.agent_id, t + 1)))?;
        }
        Ok(())
    }
}

/// Ordered 8-connected obstacle-free cells ending at the destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrendLine {
    cells: Vec<GridCoord>,
}

impl TrendLine {
    /// Validates adjacency and passability.
    pub fn new(cells: Vec<GridCoord>, env: &GridEnvironment) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::invalid("trend line needs at least one cell"));
        }
        if let Some(&c) = cells.iter().find(|&&c| !env.is_free(c)) {
            return Err(Error::invalid(format!("trend line cell {c} is not free")));
        }
        if let Some(w) = cells.windows(2).find(|w| !w[0].is_adjacent(w[1])) {
            return Err(Error::invalid(format!("trend line cells {} and {} are not adjacent", w[0], w[1])));
        }
        Ok(TrendLine { cells })
    }

    pub fn cells(&self) -> &[GridCoord] {
        &self.cells
    }

    pub fn destination(&self) -> GridCoord {
        *self.cells.last().expect("non-empty")
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One seeded draw per step. Draws that leave the grid bounds are replaced by
/// the nearest free-cell center.
pub fn sample_trend_points(
    dist: &TrendDistribution,
    env: &GridEnvironment,
    seed: u64,
) -> Result<Vec<WorldPoint>> {
    dist.validate(None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dist.steps
        .iter()
        .map(|step| {
            let p = step.sample(&mut rng);
            if env.world_to_grid(p).is_ok() {
                Ok(p)
            } else {
                env.nearest_free_cell(p)
                    .map(|c| env.center(c))
                    .ok_or_else(|| Error::invalid("grid has no free cell"))
            }
        })
        .collect()
}

/// Cell of a point, snapped onto the grid and then onto the nearest free cell.
pub(crate) fn point_cell(env: &GridEnvironment, p: WorldPoint) -> Result<GridCoord> {
    let c = match env.world_to_grid(p) {
        Ok(c) => c,
        Err(_) => env
            .nearest_free_cell(p)
            .ok_or_else(|| Error::invalid("grid has no free cell"))?,
    };
    env.snap_to_free(c)
        .ok_or_else(|| Error::invalid("grid has no free cell"))
}

/// Joins the sampled points and the destination into a connected trend line
/// with A* segments. Junction cells shared by consecutive segments appear once.
pub fn interpolate_trend_line(
    points: &[WorldPoint],
    destination: GridCoord,
    env: &GridEnvironment,
) -> Result<TrendLine> {
    if !env.is_free(destination) {
        return Err(Error::invalid(format!("destination {destination} is not free")));
    }
    let mut waypoints = Vec::with_capacity(points.len() + 1);
    for &p in points {
        let c = point_cell(env, p)?;
        if waypoints.last() != Some(&c) {
            waypoints.push(c);
        }
    }
    if waypoints.last() != Some(&destination) {
        waypoints.push(destination);
    }

    let mut cells = vec![waypoints[0]];
    for w in waypoints.windows(2) {
        let path = astar(env, w[0], w[1])?;
        cells.extend_from_slice(&path.cells[1..]);
    }
    TrendLine::new(cells, env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Rect;

    fn dist(steps: Vec<TrendStep>) -> TrendDistribution {
        TrendDistribution {
            agent_id: AgentId(1),
            made_at_step: 0,
            steps,
        }
    }

    fn room() -> GridEnvironment {
        GridEnvironment::discretize(&[], Rect::new(0.0, 0.0, 8.0, 8.0), 0.4).unwrap()
    }

    #[test]
    fn degenerate_gaussian_returns_means() {
        let env = room();
        let steps: Vec<_> = (0..12)
            .map(|t| TrendStep {
                mu: WorldPoint::new(1.0 + 0.3 * t as f64, 2.0),
                sigma_x: 1e-12,
                sigma_y: 1e-12,
                rho: 0.7,
            })
            .collect();
        let pts = sample_trend_points(&dist(steps.clone()), &env, 3).unwrap();
        for (p, s) in pts.iter().zip(&steps) {
            assert!(p.distance(s.mu) < 1e-6);
        }
    }

    #[test]
    fn unit_gaussian_empirical_mean() {
        let env = GridEnvironment::discretize(&[], Rect::new(-100.0, -100.0, 100.0, 100.0), 0.4).unwrap();
        let d = dist(vec![TrendStep::degenerate(WorldPoint::new(3.0, -2.0), 1.0)]);
        let n = 100_000;
        let (mut sx, mut sy) = (0.0, 0.0);
        for seed in 0..n {
            let p = sample_trend_points(&d, &env, seed).unwrap()[0];
            sx += p.x;
            sy += p.y;
        }
        assert!((sx / n as f64 - 3.0).abs() < 0.02);
        assert!((sy / n as f64 + 2.0).abs() < 0.02);
    }

    #[test]
    fn correlated_samples_have_requested_correlation() {
        let env = GridEnvironment::discretize(&[], Rect::new(-100.0, -100.0, 100.0, 100.0), 0.4).unwrap();
        let step = TrendStep {
            mu: WorldPoint::new(0.0, 0.0),
            sigma_x: 2.0,
            sigma_y: 0.5,
            rho: 0.6,
        };
        let d = dist(vec![step; 64]);
        let pts: Vec<_> = (0..500).flat_map(|s| sample_trend_points(&d, &env, s).unwrap()).collect();
        let n = pts.len() as f64;
        let cov = pts.iter().map(|p| p.x * p.y).sum::<f64>() / n;
        let vx = pts.iter().map(|p| p.x * p.x).sum::<f64>() / n;
        let vy = pts.iter().map(|p| p.y * p.y).sum::<f64>() / n;
        assert!((vx.sqrt() - 2.0).abs() < 0.05);
        assert!((vy.sqrt() - 0.5).abs() < 0.02);
        assert!((cov / (vx * vy).sqrt() - 0.6).abs() < 0.02);
    }

    #[test]
    fn sampling_is_deterministic() {
        let env = room();
        let d = dist(vec![TrendStep::degenerate(WorldPoint::new(4.0, 4.0), 1.0); 12]);
        let a = sample_trend_points(&d, &env, 42).unwrap();
        let b = sample_trend_points(&d, &env, 42).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.x.to_bits() == q.x.to_bits() && p.y.to_bits() == q.y.to_bits()));
    }

    #[test]
    fn out_of_bounds_samples_are_clamped_to_free_centers() {
        let env = room();
        let d = dist(vec![TrendStep::degenerate(WorldPoint::new(50.0, 4.1), 1e-9)]);
        let p = sample_trend_points(&d, &env, 0).unwrap()[0];
        let c = env.world_to_grid(p).unwrap();
        assert_eq!(c, GridCoord::new(19, 10));
        assert!(p.distance(env.center(c)) < 1e-12);
    }

    #[test]
    fn invalid_distributions_are_rejected() {
        let env = room();
        let mut bad = TrendStep::degenerate(WorldPoint::new(1.0, 1.0), 1.0);
        bad.rho = 1.0;
        assert!(sample_trend_points(&dist(vec![bad]), &env, 0).is_err());
        bad.rho = 0.0;
        bad.sigma_y = 0.0;
        assert!(dist(vec![bad]).validate(None).is_err());
        let ok = dist(vec![TrendStep::degenerate(WorldPoint::new(1.0, 1.0), 1.0); 3]);
        assert!(ok.validate(Some(3)).is_ok());
        assert!(ok.validate(Some(12)).is_err());
    }

    #[test]
    fn single_cell_line() {
        let env = GridEnvironment::empty(10, 10, 1.0).unwrap();
        let c = GridCoord::new(4, 4);
        let pts = [WorldPoint::new(4.2, 4.3), WorldPoint::new(4.8, 4.9)];
        let line = interpolate_trend_line(&pts, c, &env).unwrap();
        assert_eq!(line.cells(), &[c]);
    }

    #[test]
    fn straight_concatenation() {
        let env = GridEnvironment::empty(10, 10, 1.0).unwrap();
        let pts = [WorldPoint::new(0.5, 0.5), WorldPoint::new(3.5, 0.5)];
        let line = interpolate_trend_line(&pts, GridCoord::new(5, 0), &env).unwrap();
        let expected: Vec<_> = (0..6).map(|i| GridCoord::new(i, 0)).collect();
        assert_eq!(line.cells(), expected.as_slice());
    }

    #[test]
    fn obstacle_points_snap_to_free_cells() {
        let env = GridEnvironment::from_ascii(&[".....", "..#..", "....."], 1.0).unwrap();
        let line = interpolate_trend_line(&[WorldPoint::new(2.5, 1.5)], GridCoord::new(4, 1), &env).unwrap();
        assert!(env.is_free(line.cells()[0]));
        assert_eq!(line.cells()[0].chebyshev(GridCoord::new(2, 1)), 1);
    }

    #[test]
    fn unreachable_destination_propagates_no_path() {
        let env = GridEnvironment::from_ascii(&["..#..", "..#..", "..#.."], 1.0).unwrap();
        let r = interpolate_trend_line(&[WorldPoint::new(0.5, 0.5)], GridCoord::new(4, 0), &env);
        assert!(matches!(r, Err(Error::NoPath { .. })));
    }

    #[test]
    fn trend_json_schema() {
        let line = r#"{"agent_id": 7, "made_at_step": 3, "steps": [[1.0, 2.0, 0.5, 0.25, -0.1]]}"#;
        let d: TrendDistribution = serde_json::from_str(line).unwrap();
        assert_eq!(d.agent_id, AgentId(7));
        assert_eq!(d.steps[0].sigma_y, 0.25);
        let back = serde_json::to_string(&d).unwrap();
        assert_eq!(back, r#"{"agent_id":7,"made_at_step":3,"steps":[[1.0,2.0,0.5,0.25,-0.1]]}"#);
    }
}
