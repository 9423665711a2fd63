//! Movement-trend predictors.
//!
//! * [`BaselinePredictor`] walks the A* shortest path at the agent's preferred
//!   speed and emits a near-degenerate Gaussian around it.
//! * [`TrendFilePredictor`] replays trend distributions from a JSON Lines file.
//! * [`LockstepPredictor`] hands a history file to an external process and
//!   blocks until that process writes the matching trend file.
//!
//! File formats, one JSON object per line:
//!
//! ```text
//! trends:  {"agent_id": 3, "made_at_step": 0, "steps": [[mu_x, mu_y, sigma_x, sigma_y, rho], ...]}
//! history: {"agent_id": 3, "cycle": 0, "positions": [[x, y], ...], "destination": [i, j]}
//! ```

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::agent::{move_length, AgentId};
use crate::error::{Error, Result};
use crate::field::{astar, TrendDistribution, TrendStep};
use crate::grid::{GridCoord, GridEnvironment, WorldPoint};

/// Spread used for baseline trends.
pub const BASELINE_SIGMA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentHistory {
    pub agent_id: AgentId,
    /// Oldest first, `dt` apart; the last entry is the current position.
    pub positions: Vec<WorldPoint>,
    pub cell: GridCoord,
    pub destination: GridCoord,
    pub preferred_speed: f64,
}

/// Inputs to one prediction cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySnapshot {
    pub cycle: u64,
    pub step: u64,
    pub agents: Vec<AgentHistory>,
}

pub type Trends = BTreeMap<AgentId, TrendDistribution>;

pub trait TrendPredictor: Send {
    fn predict(&mut self, snapshot: &HistorySnapshot, env: &GridEnvironment, seed: u64) -> Result<Trends>;
}

/// Serializable predictor selection, as it appears in config files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorKind {
    #[default]
    Baseline,
    TrendFile {
        path: PathBuf,
    },
    Lockstep {
        dir: PathBuf,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl PredictorKind {
    pub fn build(&self, horizon: usize, dt: f64) -> Result<Box<dyn TrendPredictor>> {
        let baseline = BaselinePredictor { horizon, dt };
        Ok(match self {
            PredictorKind::Baseline => Box::new(baseline),
            PredictorKind::TrendFile { path } => Box::new(TrendFilePredictor::load(path, horizon, baseline)?),
            PredictorKind::Lockstep { dir, timeout_ms } => Box::new(LockstepPredictor::new(
                dir,
                Duration::from_millis(*timeout_ms),
                horizon,
                baseline,
            )?),
        })
    }

    pub fn is_data_driven(&self) -> bool {
        !matches!(self, PredictorKind::Baseline)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselinePredictor {
    pub horizon: usize,
    pub dt: f64,
}

impl BaselinePredictor {
    /// Means spaced `preferred_speed·dt` apart along the shortest path from
    /// the agent's cell, stopping at the destination.
    pub fn trend_for(&self, agent: &AgentHistory, step: u64, env: &GridEnvironment) -> TrendDistribution {
        let cells = match astar(env, agent.cell, agent.destination) {
            Ok(p) => p.cells,
            Err(_) => vec![agent.cell],
        };
        let spacing = agent.preferred_speed * self.dt;
        let mut steps = Vec::with_capacity(self.horizon);
        let mut seg = 0;
        let mut walked_to_seg = 0.0;
        for t in 1..=self.horizon {
            let target = spacing * t as f64;
            while seg + 1 < cells.len() {
                let len = move_length(cells[seg], cells[seg + 1], env.cell_size());
                if walked_to_seg + len > target {
                    break;
                }
                walked_to_seg += len;
                seg += 1;
            }
            let p = if seg + 1 < cells.len() {
                let (a, b) = (env.center(cells[seg]), env.center(cells[seg + 1]));
                let len = move_length(cells[seg], cells[seg + 1], env.cell_size());
                let f = (target - walked_to_seg) / len;
                WorldPoint::new(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f)
            } else {
                env.center(cells[cells.len() - 1])
            };
            steps.push(TrendStep::degenerate(p, BASELINE_SIGMA));
        }
        TrendDistribution {
            agent_id: agent.agent_id,
            made_at_step: step,
            steps,
        }
    }
}

impl TrendPredictor for BaselinePredictor {
    fn predict(&mut self, snapshot: &HistorySnapshot, env: &GridEnvironment, _seed: u64) -> Result<Trends> {
        Ok(snapshot
            .agents
            .iter()
            .map(|a| (a.agent_id, self.trend_for(a, snapshot.step, env)))
            .collect())
    }
}

/// Reads a trend file, validating every record against the horizon.
pub fn read_trend_file(path: impl AsRef<Path>, horizon: Option<usize>) -> Result<Vec<TrendDistribution>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trends(&text, path, horizon)
}

fn parse_trends(text: &str, path: &Path, horizon: Option<usize>) -> Result<Vec<TrendDistribution>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: TrendDistribution =
            serde_json::from_str(line).map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        d.validate(horizon)
            .map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        out.push(d);
    }
    Ok(out)
}

pub fn write_trend_file(path: impl AsRef<Path>, trends: &[TrendDistribution]) -> Result<()> {
    let mut text = String::new();
    for t in trends {
        text.push_str(&serde_json::to_string(t)?);
        text.push('\n');
    }
    write_atomic(path.as_ref(), text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub agent_id: AgentId,
    pub cycle: u64,
    pub positions: Vec<[f64; 2]>,
    pub destination: [i32; 2],
}

impl HistorySnapshot {
    pub fn records(&self) -> Vec<HistoryRecord> {
        self.agents
            .iter()
            .map(|a| HistoryRecord {
                agent_id: a.agent_id,
                cycle: self.cycle,
                positions: a.positions.iter().map(|p| [p.x, p.y]).collect(),
                destination: [a.destination.i, a.destination.j],
            })
            .collect()
    }
}

pub fn write_history_file(path: impl AsRef<Path>, snapshot: &HistorySnapshot) -> Result<()> {
    let mut text = String::new();
    for r in snapshot.records() {
        text.push_str(&serde_json::to_string(&r)?);
        text.push('\n');
    }
    write_atomic(path.as_ref(), text.as_bytes())
}

pub fn read_history_file(path: impl AsRef<Path>) -> Result<Vec<HistoryRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, n + 1, e.to_string())))
        .collect()
}

/// Write to a temporary sibling, then rename, so pollers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Replays stored trends: for each agent, the record with the latest
/// `made_at_step` not after the current step. Agents without one fall back
/// to the baseline.
#[derive(Debug, Clone)]
pub struct TrendFilePredictor {
    by_agent: BTreeMap<AgentId, Vec<TrendDistribution>>,
    baseline: BaselinePredictor,
}

impl TrendFilePredictor {
    pub fn load(path: impl AsRef<Path>, horizon: usize, baseline: BaselinePredictor) -> Result<Self> {
        Ok(Self::from_records(read_trend_file(path, Some(horizon))?, baseline))
    }

    pub fn from_records(records: Vec<TrendDistribution>, baseline: BaselinePredictor) -> Self {
        let mut by_agent: BTreeMap<AgentId, Vec<TrendDistribution>> = BTreeMap::new();
        for r in records {
            by_agent.entry(r.agent_id).or_default().push(r);
        }
        for v in by_agent.values_mut() {
            // Stable: among equal steps the later line wins on lookup.
            v.sort_by_key(|d| d.made_at_step);
        }
        TrendFilePredictor { by_agent, baseline }
    }

    pub fn lookup(&self, agent: AgentId, step: u64) -> Option<&TrendDistribution> {
        let v = self.by_agent.get(&agent)?;
        let n = v.partition_point(|d| d.made_at_step <= step);
        n.checked_sub(1).map(|k| &v[k])
    }
}

impl TrendPredictor for TrendFilePredictor {
    fn predict(&mut self, snapshot: &HistorySnapshot, env: &GridEnvironment, _seed: u64) -> Result<Trends> {
        Ok(snapshot
            .agents
            .iter()
            .map(|a| {
                let d = match self.lookup(a.agent_id, snapshot.step) {
                    Some(d) => d.clone(),
                    None => self.baseline.trend_for(a, snapshot.step, env),
                };
                (a.agent_id, d)
            })
            .collect())
    }
}

/// File-based handshake with an external predictor: writes
/// `history_<cycle>.jsonl`, then waits for `trends_<cycle>.jsonl`.
#[derive(Debug, Clone)]
pub struct LockstepPredictor {
    dir: PathBuf,
    timeout: Duration,
    poll: Duration,
    horizon: usize,
    baseline: BaselinePredictor,
}

impl LockstepPredictor {
    pub fn new(dir: impl Into<PathBuf>, timeout: Duration, horizon: usize, baseline: BaselinePredictor) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(LockstepPredictor {
            dir,
            timeout,
            poll: Duration::from_millis(10),
            horizon,
            baseline,
        })
    }

    pub fn history_path(&self, cycle: u64) -> PathBuf {
        self.dir.join(format!("history_{cycle}.jsonl"))
    }

    pub fn trends_path(&self, cycle: u64) -> PathBuf {
        self.dir.join(format!("trends_{cycle}.jsonl"))
    }
}

impl TrendPredictor for LockstepPredictor {
    fn predict(&mut self, snapshot: &HistorySnapshot, env: &GridEnvironment, _seed: u64) -> Result<Trends> {
        write_history_file(self.history_path(snapshot.cycle), snapshot)?;
        let trends_path = self.trends_path(snapshot.cycle);
        let deadline = Instant::now() + self.timeout;
        while !trends_path.exists() {
            if Instant::now() >= deadline {
                return Err(Error::PredictorUnavailable(format!(
                    "no {} after {:?}",
                    trends_path.display(),
                    self.timeout
                )));
            }
            std::thread::sleep(self.poll);
        }
        let records = read_trend_file(&trends_path, Some(self.horizon))?;
        let mut received: Trends = records.into_iter().map(|d| (d.agent_id, d)).collect();
        Ok(snapshot
            .agents
            .iter()
            .map(|a| {
                let d = received
                    .remove(&a.agent_id)
                    .unwrap_or_else(|| self.baseline.trend_for(a, snapshot.step, env));
                (a.agent_id, d)
            })
            .collect())
    }
}
