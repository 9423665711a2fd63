//! Trajectory logs: `step,agent_id,x,y,state` CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::agent::{AgentId, AgentState};
use crate::error::{Error, Result};
use crate::grid::WorldPoint;

pub const TRAJECTORY_HEADER: &str = "step,agent_id,x,y,state";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub step: u64,
    pub agent_id: AgentId,
    pub pos: WorldPoint,
    pub state: AgentState,
}

/// Per-agent positions keyed by step.
pub type Tracks = BTreeMap<AgentId, BTreeMap<u64, WorldPoint>>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn tracks(&self) -> Tracks {
        let mut out: Tracks = BTreeMap::new();
        for r in &self.rows {
            out.entry(r.agent_id).or_default().insert(r.step, r.pos);
        }
        out
    }

    pub fn positions(&self) -> impl Iterator<Item = WorldPoint> + '_ {
        self.rows.iter().map(|r| r.pos)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(32 * (self.rows.len() + 1));
        s.push_str(TRAJECTORY_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{}",
                r.step,
                r.agent_id,
                r.pos.x,
                r.pos.y,
                r.state.as_str()
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<TrajectoryLog> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<TrajectoryLog> {
        let mut rows = Vec::new();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TRAJECTORY_HEADER => {}
            Some((_, h)) => return Err(Error::parse(path, 1, format!("expected header `{TRAJECTORY_HEADER}`, got `{h}`"))),
            None => return Err(Error::parse(path, 1, "empty trajectory file")),
        }
        for (n, line) in lines {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::parse(path, line_no, format!("expected 5 fields, got {}", fields.len())));
            }
            let bad = |what: &str, v: &str| Error::parse(path, line_no, format!("bad {what} `{v}`"));
            let step = fields[0].parse().map_err(|_| bad("step", fields[0]))?;
            let id = fields[1].parse().map_err(|_| bad("agent_id", fields[1]))?;
            let x: f64 = fields[2].parse().map_err(|_| bad("x", fields[2]))?;
            let y: f64 = fields[3].parse().map_err(|_| bad("y", fields[3]))?;
            let state = match fields[4] {
                "active" => AgentState::Active,
                "arrived" => AgentState::Arrived,
                other => return Err(bad("state", other)),
            };
            rows.push(TrajectoryRow {
                step,
                agent_id: AgentId(id),
                pos: WorldPoint::new(x, y),
                state,
            });
        }
        Ok(TrajectoryLog { rows })
    }
}
