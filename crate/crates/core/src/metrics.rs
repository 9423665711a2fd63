//! Simulated-versus-recorded comparisons: average displacement error,
//! occupancy heatmaps with leveled Jaccard similarity, kernel density curves
//! and per-agent travel statistics.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::AgentId;
use crate::error::{Error, Result};
use crate::grid::{GridEnvironment, WorldPoint};
use crate::trajectory::Tracks;

/// Mean over agents of the per-agent mean Euclidean error.
///
/// Each agent is compared on the steps present in both logs, keeping the
/// first `horizon` of them when given. Agents with no common step are left
/// out; if none remain the metric is undefined.
pub fn ade(sim: &Tracks, real: &Tracks, horizon: Option<usize>) -> Result<f64> {
    if horizon == Some(0) {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut per_agent = Vec::new();
    for (id, sim_track) in sim {
        let Some(real_track) = real.get(id) else { continue };
        let errors: Vec<f64> = sim_track
            .iter()
            .filter_map(|(step, p)| real_track.get(step).map(|q| p.distance(*q)))
            .take(horizon.unwrap_or(usize::MAX))
            .collect();
        if !errors.is_empty() {
            per_agent.push(errors.iter().sum::<f64>() / errors.len() as f64);
        }
    }
    if per_agent.is_empty() {
        return Err(Error::UndefinedMetric("no agent has positions in both trajectories".into()));
    }
    Ok(per_agent.iter().sum::<f64>() / per_agent.len() as f64)
}

/// Number of agents that [`ade`] would average over.
pub fn ade_agent_count(sim: &Tracks, real: &Tracks) -> usize {
    sim.iter()
        .filter(|(id, t)| real.get(id).is_some_and(|r| t.keys().any(|s| r.contains_key(s))))
        .count()
}

/// Per-cell position counts on the simulation grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    width: i32,
    height: i32,
    counts: Vec<u64>,
}

impl Heatmap {
    pub fn zeros(width: i32, height: i32) -> Self {
        Heatmap {
            width,
            height,
            counts: vec![0; (width.max(0) * height.max(0)) as usize],
        }
    }

    pub fn from_counts(width: i32, height: i32, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != (width.max(0) * height.max(0)) as usize {
            return Err(Error::invalid(format!(
                "{} counts for a {width}x{height} heatmap",
                counts.len()
            )));
        }
        Ok(Heatmap { width, height, counts })
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    /// Row-major, `j * width + i`.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// One line per row, row `j = 0` first.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.counts.chunks(self.width.max(1) as usize) {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub fn heatmap(positions: impl IntoIterator<Item = WorldPoint>, env: &GridEnvironment) -> Result<Heatmap> {
    let mut h = Heatmap::zeros(env.width(), env.height());
    for p in positions {
        let c = env.world_to_grid(p)?;
        h.counts[env.index(c)] += 1;
    }
    Ok(h)
}

/// Level of every cell: 0 for empty cells, else `1..=levels` by equal
/// (nearest-rank) quantiles of the nonzero counts.
pub fn quantize(h: &Heatmap, levels: u32) -> Result<Vec<u32>> {
    if levels < 1 {
        return Err(Error::invalid("levels must be at least 1"));
    }
    let mut nonzero: Vec<u64> = h.counts.iter().copied().filter(|&c| c > 0).collect();
    nonzero.sort_unstable();
    let n = nonzero.len();
    let thresholds: Vec<u64> = (1..levels)
        .map(|k| {
            let rank = ((k as f64 / levels as f64) * n as f64).ceil() as usize;
            nonzero[rank.clamp(1, n.max(1)) - 1]
        })
        .take(if n == 0 { 0 } else { usize::MAX })
        .collect();
    Ok(h.counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0
            } else {
                1 + thresholds.iter().filter(|&&t| c > t).count() as u32
            }
        })
        .collect())
}

/// Mean over levels `1..=levels` of |A_k ∩ B_k| / |A_k ∪ B_k|; a level that
/// is empty in both heatmaps scores 1.
pub fn jaccard_similarity(a: &Heatmap, b: &Heatmap, levels: u32) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::invalid(format!(
            "heatmap shapes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (la, lb) = (quantize(a, levels)?, quantize(b, levels)?);
    let mut total = 0.0;
    for k in 1..=levels {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&x, &y) in la.iter().zip(&lb) {
            let (ia, ib) = (x == k, y == k);
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
        }
        total += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    }
    Ok(total / levels as f64)
}

/// Silverman's rule of thumb; 1.0 when the samples have no spread.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 1.0;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        let pos = q * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    if h > 0.0 && h.is_finite() {
        h
    } else {
        1.0
    }
}

/// Gaussian kernel density on `grid_points` evenly spaced points over
/// `[min - 3h, max + 3h]`. `bandwidth = None` uses Silverman's rule.
pub fn kde(samples: &[f64], bandwidth: Option<f64>, grid_points: usize) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::invalid("kde needs at least one sample"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("kde samples must be finite"));
    }
    if grid_points < 2 {
        return Err(Error::invalid("kde needs at least two grid points"));
    }
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(samples));
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * PI).sqrt());
    Ok((0..grid_points)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / (grid_points - 1) as f64;
            let d: f64 = samples.iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum();
            (x, d * norm)
        })
        .collect())
}

pub fn kde_to_csv(curve: &[(f64, f64)]) -> String {
    let mut s = String::from("x,density\n");
    for (x, d) in curve {
        let _ = writeln!(s, "{x},{d}");
    }
    s
}

/// Polyline length and length / (segments · dt).
pub fn travel_stats(points: &[WorldPoint], dt: f64) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::invalid("travel stats need at least two points"));
    }
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::invalid("dt must be positive"));
    }
    let dist: f64 = points.windows(2).map(|w| w[0].distance(w[1])).sum();
    Ok((dist, dist / ((points.len() - 1) as f64 * dt)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTravel {
    pub agent_id: AgentId,
    pub distance: f64,
    pub mean_speed: f64,
}

pub fn travel_by_agent(tracks: &Tracks, dt: f64) -> Vec<AgentTravel> {
    tracks
        .iter()
        .filter(|(_, t)| t.len() >= 2)
        .map(|(&id, t)| {
            let pts: Vec<WorldPoint> = t.values().copied().collect();
            let (distance, mean_speed) = travel_stats(&pts, dt).expect("two or more points");
            AgentTravel {
                agent_id: id,
                distance,
                mean_speed,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// meters
    pub ade: f64,
    pub horizon: Option<usize>,
    pub agents_compared: usize,
    pub jaccard: f64,
    pub levels: u32,
    pub sim_travel: Vec<AgentTravel>,
    pub real_travel: Vec<AgentTravel>,
    /// Name → written file, for any exported curves or grids.
    pub files: BTreeMap<String, String>,
}
