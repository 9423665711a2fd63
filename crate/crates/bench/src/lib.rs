//! Deterministic scenes shared by the benchmarks.

use gridcrowd::agent::AgentId;
use gridcrowd::field::{TrendDistribution, TrendStep};
use gridcrowd::sim::{AgentSpec, SimConfig, World};
use gridcrowd::{GridCoord, GridEnvironment, WorldPoint};

pub const CELL: f64 = 0.4;

/// `size`×`size` room with a regular lattice of 2×2 pillars.
pub fn pillar_room(size: i32) -> GridEnvironment {
    let free = (0..size * size)
        .map(|k| {
            let (i, j) = (k % size, k / size);
            !(i % 8 >= 4 && i % 8 < 6 && j % 8 >= 4 && j % 8 < 6)
        })
        .collect();
    GridEnvironment::from_passability(size, size, CELL, WorldPoint::new(0.0, 0.0), free).unwrap()
}

/// A trend that runs along the room's diagonal.
pub fn diagonal_trend(env: &GridEnvironment, horizon: usize) -> TrendDistribution {
    let span = env.width().min(env.height()) as f64 * CELL;
    let steps = (1..=horizon)
        .map(|t| {
            let d = span * t as f64 / (horizon as f64 + 1.0);
            TrendStep {
                mu: WorldPoint::new(d, d),
                sigma_x: 0.2,
                sigma_y: 0.2,
                rho: 0.1,
            }
        })
        .collect();
    TrendDistribution {
        agent_id: AgentId(1),
        made_at_step: 0,
        steps,
    }
}

/// `agents` pedestrians entering from the left and right walls, each heading
/// to the opposite side.
pub fn crossing_world(size: i32, agents: usize) -> World {
    let env = pillar_room(size);
    let rows: Vec<i32> = (0..size).filter(|j| env.is_free(GridCoord::new(0, *j))).collect();
    let specs = (0..agents)
        .map(|k| {
            let row = rows[(k / 2) % rows.len()];
            let col = (k / (2 * rows.len())) as i32;
            let (start, dest) = if k % 2 == 0 {
                (GridCoord::new(col, row), GridCoord::new(size - 1, row))
            } else {
                (GridCoord::new(size - 1 - col, row), GridCoord::new(0, row))
            };
            AgentSpec::new(k as u64 + 1, start, dest, 1.2)
        })
        .collect();
    let config = SimConfig {
        max_steps: 10_000,
        ..SimConfig::default()
    };
    World::new(env, specs, config).unwrap()
}
