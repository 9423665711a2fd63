//! The closed simulation loop: agents move greedily on their global fields,
//! pedestrian fields follow every step, and navigation fields are rebuilt from
//! fresh predictions every `t_d` steps.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{execute, plan_step, sweep_cells, Agent, AgentId, AgentState};
use crate::error::{Error, Result};
use crate::field::{
    build_navigation_field, global_field, magnitude_matrix, obstacle_field, pedestrian_field, DirectionField,
    FieldKind, FieldMatrix, FieldParams, NavigationField, PedestrianSweep, TrendDistribution,
};
use crate::grid::{GridCoord, GridEnvironment, WorldPoint};
use crate::predictor::{AgentHistory, HistorySnapshot, PredictorKind, TrendPredictor};
use crate::trajectory::{TrajectoryLog, TrajectoryRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Step length, seconds.
    pub dt: f64,
    /// Prediction horizon, steps.
    pub t_p: usize,
    /// Data-driven period: steps between predictions, `1 <= t_d <= t_p`.
    pub t_d: usize,
    /// Observed history length.
    pub h_obs: usize,
    pub max_steps: u64,
    pub seed: u64,
    pub field_params: FieldParams,
    pub predictor: PredictorKind,
    /// When set, every agent walks at this speed (m/s).
    pub preferred_speed: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.4,
            t_p: 12,
            t_d: 6,
            h_obs: 8,
            max_steps: 1000,
            seed: 0,
            field_params: FieldParams::default(),
            predictor: PredictorKind::Baseline,
            preferred_speed: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.t_p < 1 {
            return Err(Error::invalid("t_p must be at least 1"));
        }
        if !(1..=self.t_p).contains(&self.t_d) {
            return Err(Error::OutOfRange(format!(
                "t_d = {} must satisfy 1 <= t_d <= t_p = {}",
                self.t_d, self.t_p
            )));
        }
        if self.h_obs < 1 {
            return Err(Error::invalid("h_obs must be at least 1"));
        }
        if self.max_steps < 1 {
            return Err(Error::invalid("max_steps must be at least 1"));
        }
        if let Some(v) = self.preferred_speed {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("preferred_speed must be positive, got {v}")));
            }
        }
        self.field_params.validate()
    }
}

/// An agent waiting to enter the simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub id: AgentId,
    pub start: GridCoord,
    pub destination: GridCoord,
    pub preferred_speed: f64,
    /// Step at which the agent enters.
    pub activation_step: u64,
    /// Observed positions before entry, oldest first.
    pub observed: Vec<WorldPoint>,
}

impl AgentSpec {
    pub fn new(id: u64, start: GridCoord, destination: GridCoord, preferred_speed: f64) -> Self {
        AgentSpec {
            id: AgentId(id),
            start,
            destination,
            preferred_speed,
            activation_step: 0,
            observed: Vec::new(),
        }
    }
}

/// Fields one agent plans against at the current step.
#[derive(Debug, Clone)]
pub struct AgentFields {
    pub direction: DirectionField,
    pub mf: FieldMatrix,
    pub mc: FieldMatrix,
    pub mi: FieldMatrix,
    pub mg: FieldMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent_id: AgentId,
    pub activated_at: Option<u64>,
    pub arrived_at: Option<u64>,
    /// meters
    pub distance: f64,
    /// m/s over the agent's time in the simulation
    pub mean_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub agents: usize,
    pub arrived: usize,
    pub active: usize,
    pub never_activated: usize,
    pub predictions: u64,
    pub wall_clock_secs: f64,
    pub per_agent: Vec<AgentSummary>,
}

struct Tracking {
    activated_at: Option<u64>,
    arrived_at: Option<u64>,
    distance: f64,
}

/// Full simulation state.
pub struct World {
    config: SimConfig,
    env: GridEnvironment,
    components: Vec<Option<u32>>,
    step: u64,
    cycle: u64,
    agents: BTreeMap<AgentId, Agent>,
    pending: Vec<AgentSpec>,
    navigation: BTreeMap<AgentId, NavigationField>,
    trends: BTreeMap<AgentId, TrendDistribution>,
    mc: FieldMatrix,
    sweeps: Vec<PedestrianSweep>,
    mi: BTreeMap<AgentId, FieldMatrix>,
    mg: BTreeMap<AgentId, FieldMatrix>,
    predictor: Box<dyn TrendPredictor>,
    log: TrajectoryLog,
    tracking: BTreeMap<AgentId, Tracking>,
    /// Rows for agents that entered already at their destination.
    pending_arrivals: Vec<TrajectoryRow>,
}

/// Deterministic seed derivation (splitmix64 over the parts).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

const SALT_PREDICT: u64 = 1;
const SALT_SAMPLE: u64 = 2;
const SALT_EXPAND: u64 = 3;

impl World {
    /// Builds the static obstacle field, runs the first prediction and builds
    /// every starting agent's fields.
    pub fn new(env: GridEnvironment, specs: Vec<AgentSpec>, config: SimConfig) -> Result<World> {
        let predictor = config.predictor.build(config.t_p, config.dt)?;
        Self::with_predictor(env, specs, config, predictor)
    }

    /// Like [`World::new`] with an explicit predictor instance.
    pub fn with_predictor(
        env: GridEnvironment,
        specs: Vec<AgentSpec>,
        config: SimConfig,
        predictor: Box<dyn TrendPredictor>,
    ) -> Result<World> {
        config.validate()?;
        let mut seen_ids = BTreeSet::new();
        let mut starting_cells = BTreeSet::new();
        for s in &specs {
            if !seen_ids.insert(s.id) {
                return Err(Error::invalid(format!("duplicate agent id {}", s.id)));
            }
            for (what, c) in [("start", s.start), ("destination", s.destination)] {
                if !env.is_free(c) {
                    return Err(Error::invalid(format!("agent {}: {what} {c} is not a free cell", s.id)));
                }
            }
            if s.activation_step == 0 && !starting_cells.insert(s.start) {
                return Err(Error::invalid(format!("agent {}: cell {} is already taken", s.id, s.start)));
            }
        }

        let fp = config.field_params;
        let mc = magnitude_matrix(&obstacle_field(&env, fp.delta, fp.lambda_o), FieldKind::Obstacle);
        let components = env.components();
        let mut pending = specs;
        pending.sort_by_key(|s| (s.activation_step, s.id));

        let mut world = World {
            config,
            env,
            components,
            step: 0,
            cycle: 0,
            agents: BTreeMap::new(),
            pending,
            navigation: BTreeMap::new(),
            trends: BTreeMap::new(),
            mc,
            sweeps: Vec::new(),
            mi: BTreeMap::new(),
            mg: BTreeMap::new(),
            predictor,
            log: TrajectoryLog::default(),
            tracking: BTreeMap::new(),
            pending_arrivals: Vec::new(),
        };
        let entered = world.activate_pending()?;
        world.sweeps = world
            .agents
            .values()
            .map(|a| PedestrianSweep {
                agent_id: a.id,
                cells: vec![a.cell],
            })
            .collect();
        let active: Vec<AgentId> = world.agents.keys().copied().collect();
        world.refresh_navigation(&active)?;
        world.refresh_dynamic_fields();
        world.log_rows(&entered);
        Ok(world)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn env(&self) -> &GridEnvironment {
        &self.env
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn predictions(&self) -> u64 {
        self.cycle
    }

    pub fn agents(&self) -> &BTreeMap<AgentId, Agent> {
        &self.agents
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    pub fn into_log(self) -> TrajectoryLog {
        self.log
    }

    pub fn obstacle_matrix(&self) -> &FieldMatrix {
        &self.mc
    }

    pub fn current_trend(&self, id: AgentId) -> Option<&TrendDistribution> {
        self.trends.get(&id)
    }

    /// True once nothing is active or waiting to enter.
    pub fn is_finished(&self) -> bool {
        self.agents.is_empty() && self.pending.is_empty()
    }

    pub fn fields_for(&self, id: AgentId) -> Option<AgentFields> {
        let nav = self.navigation.get(&id)?;
        Some(AgentFields {
            direction: nav.direction.clone(),
            mf: nav.matrix.clone(),
            mc: self.mc.clone(),
            mi: self.mi.get(&id)?.clone(),
            mg: self.mg.get(&id)?.clone(),
        })
    }

    /// Advances one step.
    pub fn step(&mut self) -> Result<()> {
        if self.step >= self.config.max_steps {
            return Err(Error::OutOfRange(format!("max_steps {} reached", self.config.max_steps)));
        }
        self.step += 1;
        let dt = self.config.dt;

        let mut occupied: BTreeSet<GridCoord> = self.agents.values().map(|a| a.cell).collect();
        let mut swept_now: BTreeSet<GridCoord> = BTreeSet::new();
        let mut new_sweeps = Vec::with_capacity(self.agents.len());
        let mut touched = Vec::with_capacity(self.agents.len());
        let ids: Vec<AgentId> = self.agents.keys().copied().collect();

        for id in ids {
            let agent = self.agents.get_mut(&id).expect("active agent");
            let mg = &self.mg[&id];
            let own = agent.cell;
            let plan = plan_step(agent, mg, &self.env, |c| {
                c != own && (occupied.contains(&c) || swept_now.contains(&c))
            });
            let old = agent.cell;
            let old_pos = agent.world_pos;
            execute(agent, plan, dt, &self.env)?;
            let new = agent.cell;
            if let Some(t) = self.tracking.get_mut(&id) {
                t.distance += old_pos.distance(agent.world_pos);
            }
            occupied.remove(&old);
            occupied.insert(new);
            let sweep = sweep_cells(id, old, new, &self.env)?;
            swept_now.extend(sweep.cells.iter().copied());
            touched.push(id);
            if agent.state == AgentState::Arrived {
                if let Some(t) = self.tracking.get_mut(&id) {
                    t.arrived_at = Some(self.step);
                }
            } else {
                new_sweeps.push(sweep);
            }
        }

        let arrived: Vec<AgentId> = touched
            .iter()
            .copied()
            .filter(|id| self.agents[id].state == AgentState::Arrived)
            .collect();
        let mut rows = touched;
        // Arrived agents get one final row, then leave the crowd.
        let arrived_rows: Vec<TrajectoryRow> = arrived
            .iter()
            .map(|id| self.row_for(&self.agents[id]))
            .collect();
        for id in &arrived {
            self.agents.remove(id);
            self.navigation.remove(id);
            self.trends.remove(id);
            self.mi.remove(id);
            self.mg.remove(id);
        }
        rows.retain(|id| !arrived.contains(id));

        self.sweeps = new_sweeps;
        let entered = self.activate_pending_blocked(&occupied)?;
        for id in &entered {
            if let Some(a) = self.agents.get(id) {
                self.sweeps.push(PedestrianSweep {
                    agent_id: *id,
                    cells: vec![a.cell],
                });
            }
        }

        let period = self.config.t_d as u64;
        if self.step.is_multiple_of(period) {
            let active: Vec<AgentId> = self.agents.keys().copied().collect();
            self.refresh_navigation(&active)?;
        } else {
            let fresh: Vec<AgentId> = entered.iter().copied().filter(|id| self.agents.contains_key(id)).collect();
            self.refresh_navigation(&fresh)?;
        }
        self.refresh_dynamic_fields();

        rows.extend(entered.iter().copied().filter(|id| self.agents.contains_key(id)));
        let mut out: Vec<TrajectoryRow> = rows.iter().map(|id| self.row_for(&self.agents[id])).collect();
        out.extend(arrived_rows);
        out.append(&mut self.pending_arrivals);
        out.sort_by_key(|r| r.agent_id);
        self.log.rows.extend(out);
        Ok(())
    }

    /// Steps until everyone has arrived or `max_steps` is reached.
    pub fn run(&mut self) -> Result<RunSummary> {
        let started = Instant::now();
        while !self.is_finished() && self.step < self.config.max_steps {
            self.step()?;
        }
        Ok(self.summary(started.elapsed().as_secs_f64()))
    }

    pub fn summary(&self, wall_clock_secs: f64) -> RunSummary {
        let dt = self.config.dt;
        let per_agent: Vec<AgentSummary> = self
            .tracking
            .iter()
            .map(|(&id, t)| {
                let steps = match (t.activated_at, t.arrived_at) {
                    (Some(a), Some(b)) => b.saturating_sub(a),
                    (Some(a), None) => self.step.saturating_sub(a),
                    _ => 0,
                };
                AgentSummary {
                    agent_id: id,
                    activated_at: t.activated_at,
                    arrived_at: t.arrived_at,
                    distance: t.distance,
                    mean_speed: if steps > 0 { t.distance / (steps as f64 * dt) } else { 0.0 },
                }
            })
            .collect();
        RunSummary {
            steps: self.step,
            agents: self.tracking.len(),
            arrived: per_agent.iter().filter(|a| a.arrived_at.is_some()).count(),
            active: self.agents.len(),
            never_activated: self.pending.len(),
            predictions: self.cycle,
            wall_clock_secs,
            per_agent,
        }
    }

    fn row_for(&self, a: &Agent) -> TrajectoryRow {
        TrajectoryRow {
            step: self.step,
            agent_id: a.id,
            pos: a.world_pos,
            state: a.state,
        }
    }

    fn activate_pending(&mut self) -> Result<Vec<AgentId>> {
        let occupied: BTreeSet<GridCoord> = self.agents.values().map(|a| a.cell).collect();
        self.activate_pending_blocked(&occupied)
    }

    /// Brings in due agents whose start cell is free; others keep waiting.
    fn activate_pending_blocked(&mut self, occupied: &BTreeSet<GridCoord>) -> Result<Vec<AgentId>> {
        let mut occupied = occupied.clone();
        let mut entered = Vec::new();
        let mut still = Vec::with_capacity(self.pending.len());
        for spec in std::mem::take(&mut self.pending) {
            if spec.activation_step > self.step || occupied.contains(&spec.start) {
                still.push(spec);
                continue;
            }
            let speed = self.config.preferred_speed.unwrap_or(spec.preferred_speed);
            let mut agent = Agent::new(spec.id, spec.start, spec.destination, speed, self.config.h_obs, &self.env)?;
            if !spec.observed.is_empty() {
                agent.seed_history(&spec.observed);
            }
            self.tracking.insert(
                spec.id,
                Tracking {
                    activated_at: Some(self.step),
                    arrived_at: (agent.state == AgentState::Arrived).then_some(self.step),
                    distance: 0.0,
                },
            );
            entered.push(spec.id);
            if agent.state == AgentState::Arrived {
                self.pending_arrivals.push(self.row_for(&agent));
                continue;
            }
            occupied.insert(agent.cell);
            self.agents.insert(agent.id, agent);
        }
        self.pending = still;
        Ok(entered)
    }

    fn snapshot(&self, ids: &[AgentId]) -> HistorySnapshot {
        let h = self.config.h_obs;
        let agents = ids
            .iter()
            .filter_map(|id| self.agents.get(id))
            .map(|a| {
                let mut positions: Vec<WorldPoint> = a.history.iter().copied().collect();
                while positions.len() < h {
                    positions.insert(0, positions[0]);
                }
                AgentHistory {
                    agent_id: a.id,
                    positions,
                    cell: a.cell,
                    destination: a.destination,
                    preferred_speed: a.preferred_speed,
                }
            })
            .collect();
        HistorySnapshot {
            cycle: self.cycle,
            step: self.step,
            agents,
        }
    }

    /// Predicts for `ids` and rebuilds their navigation fields.
    fn refresh_navigation(&mut self, ids: &[AgentId]) -> Result<()> {
        if ids.is_empty() {
            return Ok(());
        }
        let snapshot = self.snapshot(ids);
        let seed = derive_seed(self.config.seed, &[SALT_PREDICT, self.cycle]);
        let trends = self.predictor.predict(&snapshot, &self.env, seed)?;
        let cycle = self.cycle;
        self.cycle += 1;

        let base = self.config.seed;
        let params = self.config.field_params;
        let env = &self.env;
        let components = &self.components;
        let jobs: Vec<(AgentId, GridCoord, &TrendDistribution)> = ids
            .iter()
            .filter_map(|id| Some((*id, self.agents.get(id)?.destination, trends.get(id)?)))
            .collect();
        let built: Vec<(AgentId, NavigationField)> = jobs
            .par_iter()
            .map(|&(id, dest, dist)| {
                let nav = build_navigation_field(
                    dist,
                    dest,
                    &params,
                    env,
                    components,
                    derive_seed(base, &[SALT_SAMPLE, id.0, cycle]),
                    derive_seed(base, &[SALT_EXPAND, id.0, cycle]),
                )?;
                Ok((id, nav))
            })
            .collect::<Result<_>>()?;
        for (id, nav) in built {
            self.navigation.insert(id, nav);
        }
        for (id, d) in trends {
            if self.agents.contains_key(&id) {
                self.trends.insert(id, d);
            }
        }
        Ok(())
    }

    /// Rebuilds every agent's `M_I` from the latest sweeps and sums `M_G`.
    fn refresh_dynamic_fields(&mut self) {
        let fp = self.config.field_params;
        let env = &self.env;
        let sweeps = &self.sweeps;
        let mc = &self.mc;
        let navigation = &self.navigation;
        let built: Vec<(AgentId, FieldMatrix, FieldMatrix)> = self
            .agents
            .keys()
            .copied()
            .collect::<Vec<_>>()
            .into_par_iter()
            .filter_map(|id| {
                let nav = navigation.get(&id)?;
                let mi = magnitude_matrix(
                    &pedestrian_field(sweeps, Some(id), fp.epsilon, fp.lambda_h, env),
                    FieldKind::Pedestrian,
                );
                let mg = global_field(&nav.matrix, mc, &mi).expect("fields share the grid shape");
                Some((id, mi, mg))
            })
            .collect();
        self.mi.clear();
        self.mg.clear();
        for (id, mi, mg) in built {
            self.mi.insert(id, mi);
            self.mg.insert(id, mg);
        }
    }

    fn log_rows(&mut self, ids: &[AgentId]) {
        let mut rows: Vec<TrajectoryRow> = ids
            .iter()
            .filter_map(|id| self.agents.get(id))
            .map(|a| self.row_for(a))
            .collect();
        rows.extend(std::mem::take(&mut self.pending_arrivals));
        rows.sort_by_key(|r| r.agent_id);
        self.log.rows.extend(rows);
    }
}
