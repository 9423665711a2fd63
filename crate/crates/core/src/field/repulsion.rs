//! Short-range repulsive fields around obstacles and around the space other
//! pedestrians swept through during the last step.
//!
//! Both fields share one kernel. For a cell whose nearest source cell lies at
//! offset `v` (cell units, from source center to cell center):
//!
//! ```text
//! |v| = 0           -> +inf
//! 0 < |v| <= range  -> strength * (range - |v|) / |v|^2 * v
//! |v| > range       -> 0
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::agent::AgentId;
use crate::grid::{GridCoord, GridEnvironment};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldVector {
    Finite { x: f64, y: f64 },
    Infinite,
}

impl FieldVector {
    pub const ZERO: FieldVector = FieldVector::Finite { x: 0.0, y: 0.0 };

    pub fn magnitude(self) -> f64 {
        match self {
            FieldVector::Finite { x, y } => x.hypot(y),
            FieldVector::Infinite => f64::INFINITY,
        }
    }
}

/// Dense per-cell vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    width: i32,
    height: i32,
    values: Vec<FieldVector>,
}

impl VectorField {
    pub fn zeros(width: i32, height: i32) -> Self {
        VectorField {
            width,
            height,
            values: vec![FieldVector::ZERO; (width * height) as usize],
        }
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn values(&self) -> &[FieldVector] {
        &self.values
    }

    pub fn get(&self, c: GridCoord) -> FieldVector {
        self.values[(c.j * self.width + c.i) as usize]
    }

    pub fn set(&mut self, c: GridCoord, v: FieldVector) {
        self.values[(c.j * self.width + c.i) as usize] = v;
    }
}

/// Cells an agent swept through between `t - dt` and `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PedestrianSweep {
    pub agent_id: AgentId,
    pub cells: Vec<GridCoord>,
}

/// Kernel value for a cell at offset `(dx, dy)` from its nearest source.
pub fn repulsion_kernel(dx: f64, dy: f64, range: f64, strength: f64) -> FieldVector {
    let d = dx.hypot(dy);
    if d == 0.0 {
        FieldVector::Infinite
    } else if d <= range {
        let s = strength * (range - d) / (d * d);
        FieldVector::Finite { x: s * dx, y: s * dy }
    } else {
        FieldVector::ZERO
    }
}

/// Applies the kernel around `sources`. Only cells within `range` of a source
/// can be non-zero, so each source touches a `(2R+1)²` window. Among equally
/// near sources the first in row-major order wins.
fn repulsion_field(
    env: &GridEnvironment,
    sources: &BTreeSet<(i32, i32)>,
    range: f64,
    strength: f64,
    skip_obstacles: bool,
) -> VectorField {
    let mut field = VectorField::zeros(env.width(), env.height());
    let mut best = vec![i64::MAX; env.len()];
    let reach = range.floor() as i32;
    let range_sq = range * range;

    // Row-major: BTreeSet<(j, i)>.
    for &(sj, si) in sources {
        let s = GridCoord::new(si, sj);
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let c = s.offset(di, dj);
                if !env.in_bounds(c) {
                    continue;
                }
                let k = env.index(c);
                if skip_obstacles && !env.is_free(c) && (di, dj) != (0, 0) {
                    continue;
                }
                let d2 = (di * di + dj * dj) as i64;
                if (d2 as f64) > range_sq && d2 != 0 {
                    continue;
                }
                if d2 < best[k] {
                    best[k] = d2;
                    field.values[k] = repulsion_kernel(di as f64, dj as f64, range, strength);
                }
            }
        }
    }
    field
}

/// Obstacle field `C`: `+inf` on obstacle cells, kernel with range `delta`
/// around them, zero when the grid has no obstacles.
pub fn obstacle_field(env: &GridEnvironment, delta: f64, lambda_o: f64) -> VectorField {
    let sources = env.obstacle_cells().map(|c| (c.j, c.i)).collect();
    repulsion_field(env, &sources, delta, lambda_o, false)
}

/// Pedestrian field `I` as seen by agent `exclude`: the union of every other
/// agent's swept cells acts as the source set.
pub fn pedestrian_field(
    sweeps: &[PedestrianSweep],
    exclude: Option<AgentId>,
    epsilon: f64,
    lambda_h: f64,
    env: &GridEnvironment,
) -> VectorField {
    let sources = sweeps
        .iter()
        .filter(|s| Some(s.agent_id) != exclude)
        .flat_map(|s| s.cells.iter())
        .filter(|c| env.in_bounds(**c))
        .map(|c| (c.j, c.i))
        .collect();
    repulsion_field(env, &sources, epsilon, lambda_h, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(N·M) nearest-source magnitude, independent of the windowed build.
    fn brute_force_magnitudes(env: &GridEnvironment, sources: &[GridCoord], range: f64, strength: f64) -> Vec<f64> {
        env.cells()
            .map(|c| {
                let d = sources
                    .iter()
                    .map(|s| (((c.i - s.i).pow(2) + (c.j - s.j).pow(2)) as f64).sqrt())
                    .fold(f64::INFINITY, f64::min);
                if d == 0.0 {
                    f64::INFINITY
                } else if d <= range {
                    strength * (range - d) / d
                } else {
                    0.0
                }
            })
            .collect()
    }

    #[test]
    fn kernel_identities() {
        for &(range, strength) in &[(1.0, 1.0), (2.0, 3.5), (4.0, 0.2)] {
            let half = range / 2.0;
            let v = repulsion_kernel(half * 0.6, half * 0.8, range, strength);
            assert!((v.magnitude() - strength).abs() < 1e-12);
            assert_eq!(repulsion_kernel(range, 0.0, range, strength).magnitude(), 0.0);
            assert_eq!(repulsion_kernel(range + 0.1, 0.0, range, strength), FieldVector::ZERO);
            assert_eq!(repulsion_kernel(0.0, 0.0, range, strength), FieldVector::Infinite);
        }
    }

    #[test]
    fn kernel_points_away_from_source() {
        let FieldVector::Finite { x, y } = repulsion_kernel(1.0, 0.0, 2.0, 1.0) else {
            panic!()
        };
        assert!(x > 0.0 && y == 0.0);
    }

    #[test]
    fn no_obstacles_no_field() {
        let env = GridEnvironment::empty(8, 8, 0.4).unwrap();
        assert!(obstacle_field(&env, 3.0, 1.0).values().iter().all(|v| *v == FieldVector::ZERO));
    }

    #[test]
    fn single_obstacle_matches_brute_force() {
        let mut free = vec![true; 121];
        free[5 * 11 + 5] = false;
        let env = GridEnvironment::from_passability(11, 11, 0.4, Default::default(), free).unwrap();
        let f = obstacle_field(&env, 2.0, 1.0);
        let expected = brute_force_magnitudes(&env, &[GridCoord::new(5, 5)], 2.0, 1.0);
        for (k, c) in env.cells().enumerate() {
            let m = f.get(c).magnitude();
            assert!(m == expected[k] || (m - expected[k]).abs() < 1e-12, "{c}: {m} vs {}", expected[k]);
        }
        assert_eq!(f.get(GridCoord::new(4, 5)).magnitude(), 1.0);
    }

    #[test]
    fn pedestrian_field_without_others_is_zero() {
        let env = GridEnvironment::empty(6, 6, 0.4).unwrap();
        let sweeps = vec![PedestrianSweep {
            agent_id: AgentId(1),
            cells: vec![GridCoord::new(2, 2)],
        }];
        let f = pedestrian_field(&sweeps, Some(AgentId(1)), 1.0, 1.0, &env);
        assert!(f.values().iter().all(|v| *v == FieldVector::ZERO));
    }

    #[test]
    fn pedestrian_field_half_range_identity() {
        let env = GridEnvironment::empty(9, 9, 0.4).unwrap();
        let sweeps = vec![PedestrianSweep {
            agent_id: AgentId(2),
            cells: vec![GridCoord::new(4, 4)],
        }];
        let f = pedestrian_field(&sweeps, Some(AgentId(1)), 2.0, 0.7, &env);
        assert!((f.get(GridCoord::new(4, 5)).magnitude() - 0.7).abs() < 1e-12);
        assert_eq!(f.get(GridCoord::new(4, 4)), FieldVector::Infinite);
    }

    #[test]
    fn two_sweeps_match_brute_force() {
        let env = GridEnvironment::empty(12, 10, 0.4).unwrap();
        let sweeps = vec![
            PedestrianSweep {
                agent_id: AgentId(1),
                cells: vec![GridCoord::new(2, 2), GridCoord::new(3, 3), GridCoord::new(3, 2), GridCoord::new(2, 3)],
            },
            PedestrianSweep {
                agent_id: AgentId(2),
                cells: vec![GridCoord::new(8, 6), GridCoord::new(9, 6)],
            },
            PedestrianSweep {
                agent_id: AgentId(3),
                cells: vec![GridCoord::new(0, 9)],
            },
        ];
        let f = pedestrian_field(&sweeps, Some(AgentId(3)), 2.0, 1.3, &env);
        let sources: Vec<_> = sweeps[..2].iter().flat_map(|s| s.cells.clone()).collect();
        let expected = brute_force_magnitudes(&env, &sources, 2.0, 1.3);
        for (k, c) in env.cells().enumerate() {
            let m = f.get(c).magnitude();
            assert!(m == expected[k] || (m - expected[k]).abs() < 1e-12, "{c}");
        }
    }

    #[test]
    fn rotating_scene_rotates_vectors() {
        // Asymmetric L-shaped obstacle on a square grid, rotated 90° counter-clockwise.
        let n = 9;
        let base = [GridCoord::new(2, 2), GridCoord::new(3, 2), GridCoord::new(4, 2), GridCoord::new(2, 3)];
        let rot = |c: GridCoord| GridCoord::new(n - 1 - c.j, c.i);
        let build = |cells: &[GridCoord]| {
            let mut free = vec![true; (n * n) as usize];
            for c in cells {
                free[(c.j * n + c.i) as usize] = false;
            }
            GridEnvironment::from_passability(n, n, 1.0, Default::default(), free).unwrap()
        };
        let a = build(&base);
        let b = build(&base.iter().map(|&c| rot(c)).collect::<Vec<_>>());
        let fa = obstacle_field(&a, 2.0, 1.0);
        let fb = obstacle_field(&b, 2.0, 1.0);
        for c in a.cells() {
            let (va, vb) = (fa.get(c), fb.get(rot(c)));
            assert!((va.magnitude() - vb.magnitude()).abs() < 1e-12 || va.magnitude() == vb.magnitude());
            // Vectors rotate too, unless two sources tie for nearest.
            if let (FieldVector::Finite { x, y }, FieldVector::Finite { x: bx, y: by }) = (va, vb) {
                let nearest = base.iter().map(|s| (s.i - c.i).pow(2) + (s.j - c.j).pow(2)).min().unwrap();
                let ties = base.iter().filter(|s| (s.i - c.i).pow(2) + (s.j - c.j).pow(2) == nearest).count();
                if ties == 1 {
                    assert!((bx + y).abs() < 1e-12 && (by - x).abs() < 1e-12, "{c}");
                }
            }
        }
    }
}
