//! Recorded pedestrian trajectories: loading, resampling to the simulation
//! step and turning tracks into simulation agents.
//!
//! Input is tab separated `frame<TAB>agent_id<TAB>x<TAB>y` in meters, with
//! `#` comments and blank lines ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentId, AgentState};
use crate::error::{Error, Result};
use crate::grid::{GridCoord, GridEnvironment, WorldPoint};
use crate::sim::AgentSpec;
use crate::trajectory::{TrajectoryLog, TrajectoryRow};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetRow {
    pub frame: i64,
    pub agent_id: AgentId,
    pub pos: WorldPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    /// Sorted by (agent_id, frame).
    pub rows: Vec<DatasetRow>,
    /// Seconds between consecutive frame numbers.
    pub frame_interval: f64,
}

impl TrajectoryDataset {
    pub fn new(mut rows: Vec<DatasetRow>, frame_interval: f64) -> Result<Self> {
        if !(frame_interval > 0.0 && frame_interval.is_finite()) {
            return Err(Error::invalid(format!("frame interval must be positive, got {frame_interval}")));
        }
        rows.sort_by_key(|r| (r.agent_id, r.frame));
        if let Some(w) = rows.windows(2).find(|w| w[0].agent_id == w[1].agent_id && w[0].frame == w[1].frame) {
            return Err(Error::invalid(format!(
                "agent {} has two rows for frame {}",
                w[0].agent_id, w[0].frame
            )));
        }
        Ok(TrajectoryDataset { rows, frame_interval })
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn agent_count(&self) -> usize {
        self.tracks().len()
    }

    /// Rows grouped per agent, frames ascending.
    pub fn tracks(&self) -> BTreeMap<AgentId, Vec<(i64, WorldPoint)>> {
        let mut out: BTreeMap<AgentId, Vec<(i64, WorldPoint)>> = BTreeMap::new();
        for r in &self.rows {
            out.entry(r.agent_id).or_default().push((r.frame, r.pos));
        }
        out
    }

    /// Frame count of the longest track.
    pub fn longest_track(&self) -> usize {
        self.tracks().values().map(Vec::len).max().unwrap_or(0)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", r.frame, r.agent_id, r.pos.x, r.pos.y);
        }
        s
    }
}

/// Parses an integer that may be written as a float (`12.0`, `1.2e1`).
fn parse_integral(s: &str) -> Option<i64> {
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    let f: f64 = s.parse().ok()?;
    (f.is_finite() && f.fract() == 0.0 && f.abs() < 9.0e15).then_some(f as i64)
}

/// Parses dataset text. Column order is given by `cols`: indices of
/// (frame, id, x, y) within each row.
pub fn parse_trajectories(text: &str, path: &Path, frame_interval: f64, cols: [usize; 4]) -> Result<TrajectoryDataset> {
    let needed = cols.iter().max().copied().unwrap_or(0) + 1;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split(['\t', ' ']).filter(|f| !f.is_empty()).collect();
        if fields.len() < needed {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected at least {needed} fields, got {}", fields.len()),
            ));
        }
        let [fc, ic, xc, yc] = cols;
        let frame = parse_integral(fields[fc])
            .ok_or_else(|| Error::parse(path, line_no, format!("bad frame `{}`", fields[fc])))?;
        let id = parse_integral(fields[ic])
            .filter(|v| *v >= 0)
            .ok_or_else(|| Error::parse(path, line_no, format!("bad agent id `{}`", fields[ic])))?;
        let coord = |k: usize, what: &str| -> Result<f64> {
            fields[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, line_no, format!("bad {what} `{}`", fields[k])))
        };
        rows.push(DatasetRow {
            frame,
            agent_id: AgentId(id as u64),
            pos: WorldPoint::new(coord(xc, "x")?, coord(yc, "y")?),
        });
    }
    TrajectoryDataset::new(rows, frame_interval)
}

pub fn load_trajectories(path: impl AsRef<Path>, frame_interval: f64) -> Result<TrajectoryDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectories(&text, path, frame_interval, [0, 1, 2, 3])
}

/// Resamples to `target_interval` seconds. An integer ratio keeps every k-th
/// frame (frames divisible by k, renumbered `f / k`); otherwise positions
/// are linearly interpolated at multiples of the target interval inside
/// each agent's recorded span.
pub fn resample(ds: &TrajectoryDataset, target_interval: f64) -> Result<TrajectoryDataset> {
    if !(target_interval > 0.0 && target_interval.is_finite()) {
        return Err(Error::invalid(format!("target interval must be positive, got {target_interval}")));
    }
    let ratio = target_interval / ds.frame_interval;
    let k = ratio.round();
    let mut rows = Vec::new();
    if (ratio - k).abs() < 1e-9 && k >= 1.0 {
        let k = k as i64;
        rows.extend(
            ds.rows
                .iter()
                .filter(|r| r.frame.rem_euclid(k) == 0)
                .map(|r| DatasetRow {
                    frame: r.frame.div_euclid(k),
                    ..*r
                }),
        );
    } else {
        for (id, track) in ds.tracks() {
            let time = |f: i64| f as f64 * ds.frame_interval;
            let (first, last) = (time(track[0].0), time(track[track.len() - 1].0));
            let mut m = (first / target_interval - 1e-9).ceil() as i64;
            let mut seg = 0;
            loop {
                let t = m as f64 * target_interval;
                if t > last + 1e-9 {
                    break;
                }
                while seg + 1 < track.len() && time(track[seg + 1].0) < t - 1e-9 {
                    seg += 1;
                }
                let pos = if seg + 1 < track.len() {
                    let (t0, t1) = (time(track[seg].0), time(track[seg + 1].0));
                    let (a, b) = (track[seg].1, track[seg + 1].1);
                    let f = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                    WorldPoint::new(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f)
                } else {
                    track[seg].1
                };
                rows.push(DatasetRow {
                    frame: m,
                    agent_id: id,
                    pos,
                });
                m += 1;
            }
        }
    }
    TrajectoryDataset::new(rows, target_interval)
}

/// One recorded pedestrian ready to be simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSeed {
    pub id: AgentId,
    /// The first `h_obs` recorded positions.
    pub observed: Vec<WorldPoint>,
    /// Frame of the last observed position; the agent enters here.
    pub start_frame: i64,
    pub start: GridCoord,
    /// Cell of the final recorded position.
    pub destination: GridCoord,
    /// Mean observed speed, m/s.
    pub preferred_speed: f64,
    /// Remaining recorded positions with their frames.
    pub real_future: Vec<(i64, WorldPoint)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub seeds: Vec<AgentSeed>,
    pub skipped_short: usize,
    pub skipped_blocked: usize,
    pub skipped_stationary: usize,
    /// Seeds moved off a start cell already taken by another seed.
    pub relocated: usize,
}

impl Extraction {
    pub fn skipped(&self) -> usize {
        self.skipped_short + self.skipped_blocked + self.skipped_stationary
    }

    /// Earliest entry frame; simulation step 0 corresponds to it.
    pub fn base_frame(&self) -> Option<i64> {
        self.seeds.iter().map(|s| s.start_frame).min()
    }

    /// Simulation agents. Each enters at its own start frame.
    pub fn agent_specs(&self) -> Vec<AgentSpec> {
        let base = self.base_frame().unwrap_or(0);
        self.seeds
            .iter()
            .map(|s| AgentSpec {
                id: s.id,
                start: s.start,
                destination: s.destination,
                preferred_speed: s.preferred_speed,
                activation_step: (s.start_frame - base) as u64,
                // The current position is added by the simulator itself.
                observed: s.observed[..s.observed.len() - 1].to_vec(),
            })
            .collect()
    }

    /// Ground-truth future positions on the simulation step axis.
    pub fn real_log(&self) -> TrajectoryLog {
        let base = self.base_frame().unwrap_or(0);
        let mut rows: Vec<TrajectoryRow> = Vec::new();
        for s in &self.seeds {
            let n = s.real_future.len();
            for (k, &(frame, pos)) in s.real_future.iter().enumerate() {
                rows.push(TrajectoryRow {
                    step: (frame - base) as u64,
                    agent_id: s.id,
                    pos,
                    state: if k + 1 == n { AgentState::Arrived } else { AgentState::Active },
                });
            }
        }
        rows.sort_by_key(|r| (r.step, r.agent_id));
        TrajectoryLog { rows }
    }
}

fn mean_speed(points: &[(i64, WorldPoint)], interval: f64) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let dist: f64 = points.windows(2).map(|w| w[0].1.distance(w[1].1)).sum();
    let time = (points[points.len() - 1].0 - points[0].0) as f64 * interval;
    if time > 0.0 {
        dist / time
    } else {
        0.0
    }
}

/// Turns tracks with at least `h_obs + t_p` frames into agents.
pub fn extract_agents(ds: &TrajectoryDataset, env: &GridEnvironment, h_obs: usize, t_p: usize) -> Result<Extraction> {
    if h_obs < 1 {
        return Err(Error::invalid("h_obs must be at least 1"));
    }
    let min_len = h_obs + t_p.max(1);
    let mut out = Extraction::default();
    for (id, track) in ds.tracks() {
        if track.len() < min_len {
            out.skipped_short += 1;
            continue;
        }
        let observed: Vec<(i64, WorldPoint)> = track[..h_obs].to_vec();
        let (start_frame, last_obs) = observed[h_obs - 1];
        let end = track[track.len() - 1].1;
        let (start, destination) = match (env.world_to_grid(last_obs), env.world_to_grid(end)) {
            (Ok(s), Ok(d)) if env.is_free(s) && env.is_free(d) => (s, d),
            _ => {
                out.skipped_blocked += 1;
                continue;
            }
        };
        let mut speed = mean_speed(&observed, ds.frame_interval);
        if speed <= 0.0 {
            speed = mean_speed(&track, ds.frame_interval);
        }
        if speed <= 0.0 {
            out.skipped_stationary += 1;
            continue;
        }
        out.seeds.push(AgentSeed {
            id,
            observed: observed.iter().map(|&(_, p)| p).collect(),
            start_frame,
            start,
            destination,
            preferred_speed: speed,
            real_future: track[h_obs..].to_vec(),
        });
    }

    let mut taken = BTreeSet::new();
    for seed in &mut out.seeds {
        if taken.insert(seed.start) {
            continue;
        }
        let here = env.center(seed.start);
        let replacement = env
            .free_cells()
            .filter(|c| !taken.contains(c))
            .min_by(|a, b| env.center(*a).distance(here).total_cmp(&env.center(*b).distance(here)));
        match replacement {
            Some(c) => {
                seed.start = c;
                taken.insert(c);
                out.relocated += 1;
            }
            None => return Err(Error::invalid("more agents than free cells")),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn parse(text: &str) -> Result<TrajectoryDataset> {
        parse_trajectories(text, Path::new("d.tsv"), 0.4, [0, 1, 2, 3])
    }

    #[test]
    fn parses_a_row() {
        let ds = parse("10\t3\t1.25\t-0.40\n").unwrap();
        assert_eq!(
            ds.rows,
            vec![DatasetRow {
                frame: 10,
                agent_id: AgentId(3),
                pos: WorldPoint::new(1.25, -0.40)
            }]
        );
    }

    #[test]
    fn comments_only_is_empty() {
        let ds = parse("# header\n\n   \n# more\n").unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn float_written_ids_and_frames() {
        let ds = parse("780.0\t1.0000000e+00\t8.4\t3.5\n").unwrap();
        assert_eq!(ds.rows[0].frame, 780);
        assert_eq!(ds.rows[0].agent_id, AgentId(1));
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let err = parse("# c\n1\t1\t0\t0\n2\t1\tabc\t0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse("1\t1\t0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse("1.5\t1\t0\t0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn shuffled_input_sorts_like_sorted_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut lines = Vec::new();
        for id in 0..6 {
            for f in 0..15 {
                lines.push(format!("{}\t{}\t{:.3}\t{:.3}", f * 10, id, rng.random::<f64>(), rng.random::<f64>()));
            }
        }
        let sorted = parse(&lines.join("\n")).unwrap();
        for i in (1..lines.len()).rev() {
            let j = rng.random_range(0..=i);
            lines.swap(i, j);
        }
        let shuffled = parse(&lines.join("\n")).unwrap();
        assert_eq!(shuffled, sorted);
        let mut oracle = sorted.rows.clone();
        oracle.sort_by(|a, b| a.agent_id.cmp(&b.agent_id).then(a.frame.cmp(&b.frame)));
        assert_eq!(sorted.rows, oracle);
    }

    #[test]
    fn duplicate_frames_rejected() {
        assert!(parse("1\t1\t0\t0\n1\t1\t1\t1\n").is_err());
    }

    fn line_track(id: u64, frames: std::ops::Range<i64>, step: f64) -> Vec<DatasetRow> {
        frames
            .map(|f| DatasetRow {
                frame: f,
                agent_id: AgentId(id),
                pos: WorldPoint::new(f as f64 * step, 1.0),
            })
            .collect()
    }

    #[test]
    fn integer_ratio_keeps_every_kth_frame() {
        let ds = TrajectoryDataset::new(line_track(1, 0..17, 0.1), 0.1).unwrap();
        let out = resample(&ds, 0.4).unwrap();
        let frames: Vec<i64> = out.rows.iter().map(|r| r.frame).collect();
        assert_eq!(frames, vec![0, 1, 2, 3, 4]);
        let xs: Vec<f64> = out.rows.iter().map(|r| r.pos.x).collect();
        for (x, want) in xs.iter().zip([0.0, 0.4, 0.8, 1.2, 1.6]) {
            assert!((x - want).abs() < 1e-12);
        }
        assert_eq!(out.frame_interval, 0.4);
    }

    #[test]
    fn same_interval_is_identity() {
        let ds = TrajectoryDataset::new(line_track(1, 3..9, 0.3), 0.4).unwrap();
        assert_eq!(resample(&ds, 0.4).unwrap(), ds);
    }

    #[test]
    fn interpolated_points_lie_between_brackets() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<DatasetRow> = (0..40)
            .map(|f| DatasetRow {
                frame: f,
                agent_id: AgentId(0),
                pos: WorldPoint::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
            })
            .collect();
        let ds = TrajectoryDataset::new(rows.clone(), 0.3).unwrap();
        let out = resample(&ds, 0.4).unwrap();
        assert!(!out.rows.is_empty());
        for r in &out.rows {
            let t = r.frame as f64 * 0.4;
            let lo = (t / 0.3 + 1e-9).floor() as usize;
            let a = rows[lo].pos;
            let b = rows[(lo + 1).min(rows.len() - 1)].pos;
            // r.pos = a + f·(b − a) with f in [0, 1].
            let f_expected = t / 0.3 - lo as f64;
            let want = WorldPoint::new(a.x + (b.x - a.x) * f_expected, a.y + (b.y - a.y) * f_expected);
            assert!(r.pos.distance(want) < 1e-9, "{:?} vs {:?}", r.pos, want);
            let cross = (b.x - a.x) * (r.pos.y - a.y) - (b.y - a.y) * (r.pos.x - a.x);
            assert!(cross.abs() < 1e-9);
        }
    }

    fn env() -> GridEnvironment {
        GridEnvironment::empty(50, 10, 0.4).unwrap()
    }

    #[test]
    fn extraction_length_rule() {
        let mut rows = line_track(1, 0..20, 0.4);
        rows.extend(line_track(2, 0..19, 0.4).into_iter().map(|mut r| {
            r.pos.y = 2.0;
            r
        }));
        let ds = TrajectoryDataset::new(rows, 0.4).unwrap();
        let ex = extract_agents(&ds, &env(), 8, 12).unwrap();
        assert_eq!(ex.seeds.len(), 1);
        assert_eq!(ex.skipped_short, 1);
        let s = &ex.seeds[0];
        assert_eq!(s.id, AgentId(1));
        assert_eq!(s.observed.len(), 8);
        assert_eq!(s.real_future.len(), 12);
        assert!((s.preferred_speed - 1.0).abs() < 1e-9);
        assert_eq!(s.start, GridCoord::new(7, 2));
        assert_eq!(s.destination, GridCoord::new(19, 2));
        assert_eq!(ex.seeds.len() + ex.skipped(), ds.agent_count());
    }

    #[test]
    fn blocked_and_stationary_agents_are_counted() {
        let env = GridEnvironment::from_ascii(&["....", "..#.", "...."], 1.0).unwrap();
        let mut rows = Vec::new();
        for f in 0..4 {
            // ends on the obstacle at (2, 1)
            rows.push(DatasetRow {
                frame: f,
                agent_id: AgentId(1),
                pos: WorldPoint::new(0.5 + f as f64 * 0.5, 1.5),
            });
            rows.push(DatasetRow {
                frame: f,
                agent_id: AgentId(2),
                pos: WorldPoint::new(3.5, 0.5),
            });
        }
        let ds = TrajectoryDataset::new(rows, 0.4).unwrap();
        let ex = extract_agents(&ds, &env, 2, 2).unwrap();
        assert!(ex.seeds.is_empty());
        assert_eq!(ex.skipped_blocked, 1);
        assert_eq!(ex.skipped_stationary, 1);
    }

    #[test]
    fn shared_start_cells_are_separated() {
        let mut rows = Vec::new();
        for id in 0..3 {
            for f in 0..6 {
                rows.push(DatasetRow {
                    frame: f,
                    agent_id: AgentId(id),
                    pos: WorldPoint::new(2.1 + 0.01 * id as f64 + 0.4 * f as f64, 2.1),
                });
            }
        }
        let env = env();
        let ds = TrajectoryDataset::new(rows, 0.4).unwrap();
        let ex = extract_agents(&ds, &env, 3, 3).unwrap();
        assert_eq!(ex.seeds.len(), 3);
        assert_eq!(ex.relocated, 2);
        let starts: BTreeSet<GridCoord> = ex.seeds.iter().map(|s| s.start).collect();
        assert_eq!(starts.len(), 3);
        for s in &ex.seeds {
            assert!(env.is_free(s.start));
            assert!(s.start.chebyshev(GridCoord::new(7, 5)) <= 1);
        }
    }

    #[test]
    fn specs_and_real_log_share_the_step_axis() {
        let mut rows = line_track(1, 5..25, 0.2);
        rows.extend(line_track(2, 0..20, 0.2).into_iter().map(|mut r| {
            r.pos.y = 3.0;
            r
        }));
        let ds = TrajectoryDataset::new(rows, 0.4).unwrap();
        let ex = extract_agents(&ds, &env(), 8, 12).unwrap();
        assert_eq!(ex.base_frame(), Some(7));
        let specs = ex.agent_specs();
        assert_eq!(specs[0].activation_step, 5);
        assert_eq!(specs[1].activation_step, 0);
        assert_eq!(specs[0].observed.len(), 7);
        let real = ex.real_log().tracks();
        assert_eq!(real[&AgentId(1)].keys().next(), Some(&6));
        assert_eq!(real[&AgentId(2)].keys().next(), Some(&1));
        assert_eq!(real[&AgentId(2)].len(), 12);
    }
}
