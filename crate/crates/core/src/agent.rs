//! Agents and their sense → plan → execute cycle on the grid.

use std::collections::VecDeque;
use std::f64::consts::SQRT_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldMatrix, PedestrianSweep};
use crate::grid::{GridCoord, GridEnvironment, WorldPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentState {
    Active,
    Arrived,
}

impl AgentState {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentState::Active => "active",
            AgentState::Arrived => "arrived",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: AgentId,
    pub cell: GridCoord,
    pub world_pos: WorldPoint,
    /// m/s
    pub velocity: (f64, f64),
    /// m/s
    pub preferred_speed: f64,
    pub destination: GridCoord,
    /// Distance, in meters, accumulated but not yet spent on a move.
    pub movement_budget: f64,
    pub history: VecDeque<WorldPoint>,
    pub history_len: usize,
    pub state: AgentState,
}

impl Agent {
    /// Places an agent at the center of `cell`.
    pub fn new(
        id: AgentId,
        cell: GridCoord,
        destination: GridCoord,
        preferred_speed: f64,
        history_len: usize,
        env: &GridEnvironment,
    ) -> Result<Agent> {
        if !(preferred_speed > 0.0 && preferred_speed.is_finite()) {
            return Err(Error::invalid(format!("agent {id}: preferred speed must be positive")));
        }
        if history_len == 0 {
            return Err(Error::invalid("history length must be at least 1"));
        }
        for (what, c) in [("start", cell), ("destination", destination)] {
            if !env.is_free(c) {
                return Err(Error::invalid(format!("agent {id}: {what} {c} is not a free cell")));
            }
        }
        let world_pos = env.center(cell);
        let mut agent = Agent {
            id,
            cell,
            world_pos,
            velocity: (0.0, 0.0),
            preferred_speed,
            destination,
            movement_budget: 0.0,
            history: VecDeque::with_capacity(history_len),
            history_len,
            state: AgentState::Active,
        };
        agent.push_history(world_pos);
        if cell == destination {
            agent.state = AgentState::Arrived;
        }
        Ok(agent)
    }

    /// Replaces the history with the tail of `observed`, keeping the current
    /// position as the newest entry.
    pub fn seed_history(&mut self, observed: &[WorldPoint]) {
        self.history.clear();
        let keep = self.history_len.saturating_sub(1);
        let start = observed.len().saturating_sub(keep);
        for &p in &observed[start..] {
            self.push_history(p);
        }
        self.push_history(self.world_pos);
    }

    fn push_history(&mut self, p: WorldPoint) {
        if self.history.len() == self.history_len {
            self.history.pop_front();
        }
        self.history.push_back(p);
    }

    pub fn is_active(&self) -> bool {
        self.state == AgentState::Active
    }
}

/// What an agent perceives at the start of its turn.
#[derive(Debug, Clone)]
pub struct SpatioTemporalInfo<'a> {
    pub env: &'a GridEnvironment,
    pub crowd: Vec<CrowdMember>,
    pub nav: &'a FieldMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrowdMember {
    pub id: AgentId,
    pub cell: GridCoord,
    pub velocity: (f64, f64),
}

/// Snapshot of the active crowd (including `agent` itself) plus its field.
pub fn sense<'a, 'b>(
    agent: &Agent,
    env: &'a GridEnvironment,
    agents: impl IntoIterator<Item = &'b Agent>,
    nav: &'a FieldMatrix,
) -> Result<SpatioTemporalInfo<'a>> {
    if !agent.is_active() {
        return Err(Error::invalid(format!("agent {} is not active", agent.id)));
    }
    let crowd = agents
        .into_iter()
        .filter(|a| a.is_active())
        .map(|a| CrowdMember {
            id: a.id,
            cell: a.cell,
            velocity: a.velocity,
        })
        .collect();
    Ok(SpatioTemporalInfo { env, crowd, nav })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plan {
    Move(GridCoord),
    Wait,
}

/// Greedy descent on `M_G` over free, unoccupied neighbors.
///
/// Moves to the lowest candidate when it is strictly below the current cell.
/// When a strictly lower neighbor exists but is occupied, a sidestep to the
/// lowest candidate is allowed as long as it does not climb. Otherwise, or
/// when every candidate is `+inf` or occupied, the agent waits. Ties follow
/// the fixed neighbor order.
pub fn plan_step(
    agent: &Agent,
    mg: &FieldMatrix,
    env: &GridEnvironment,
    occupied: impl Fn(GridCoord) -> bool,
) -> Plan {
    let current = mg.get(agent.cell);
    let mut best: Option<(GridCoord, f64)> = None;
    let mut blocked_lower = false;
    for n in env.free_neighbors(agent.cell) {
        let v = mg.get(n);
        if occupied(n) {
            blocked_lower |= v < current;
            continue;
        }
        if v.is_finite() && best.is_none_or(|(_, bv)| v < bv) {
            best = Some((n, v));
        }
    }
    match best {
        Some((n, v)) if v < current || (blocked_lower && v <= current) => Plan::Move(n),
        _ => Plan::Wait,
    }
}

/// Cost of a move in meters.
pub fn move_length(from: GridCoord, to: GridCoord, cell_size: f64) -> f64 {
    if from.i != to.i && from.j != to.j {
        SQRT_2 * cell_size
    } else {
        cell_size
    }
}

/// Upper bound on the stored movement budget.
pub fn budget_cap(cell_size: f64) -> f64 {
    2.0 * cell_size * SQRT_2
}

const BUDGET_EPS: f64 = 1e-9;

/// Accrues `preferred_speed·dt` of budget and spends it on the planned move
/// when enough has built up.
pub fn execute(agent: &mut Agent, plan: Plan, dt: f64, env: &GridEnvironment) -> Result<()> {
    if let Plan::Move(target) = plan {
        if !agent.cell.is_adjacent(target) || !env.is_free(target) {
            return Err(Error::invalid(format!(
                "agent {}: target {target} is not a free neighbor of {}",
                agent.id, agent.cell
            )));
        }
    }
    let cs = env.cell_size();
    agent.movement_budget = (agent.movement_budget + agent.preferred_speed * dt).min(budget_cap(cs));

    let moved = match plan {
        Plan::Move(target) => {
            let cost = move_length(agent.cell, target, cs);
            if agent.movement_budget >= cost - BUDGET_EPS {
                agent.movement_budget = (agent.movement_budget - cost).max(0.0);
                let next = env.center(target);
                agent.velocity = ((next.x - agent.world_pos.x) / dt, (next.y - agent.world_pos.y) / dt);
                agent.cell = target;
                agent.world_pos = next;
                true
            } else {
                false
            }
        }
        Plan::Wait => false,
    };
    if !moved {
        agent.velocity = (0.0, 0.0);
    }
    agent.push_history(agent.world_pos);
    if agent.cell == agent.destination {
        agent.state = AgentState::Arrived;
    }
    Ok(())
}

/// Cells touched moving between two cell centers: both ends, plus the two
/// corner cells of a diagonal move.
pub fn sweep_cells(id: AgentId, old: GridCoord, new: GridCoord, env: &GridEnvironment) -> Result<PedestrianSweep> {
    if old.chebyshev(new) > 1 {
        return Err(Error::invalid(format!("{old} and {new} are not adjacent")));
    }
    let mut cells = vec![old];
    if new != old {
        cells.push(new);
        if old.i != new.i && old.j != new.j {
            cells.push(GridCoord::new(new.i, old.j));
            cells.push(GridCoord::new(old.i, new.j));
        }
    }
    cells.retain(|&c| env.in_bounds(c));
    Ok(PedestrianSweep { agent_id: id, cells })
}
