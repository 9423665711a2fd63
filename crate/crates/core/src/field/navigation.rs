//! Per-agent navigation field: direction vectors along the trend line, their
//! expansion into the surrounding domain, and the scalar matrix `M_F`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{FieldKind, FieldMatrix};
use super::trend::TrendLine;
use super::FieldParams;
use crate::error::{Error, Result};
use crate::grid::{GridCoord, GridEnvironment};

/// Integer direction vector in cell units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CellOffset {
    pub di: i32,
    pub dj: i32,
}

impl CellOffset {
    pub const ZERO: CellOffset = CellOffset { di: 0, dj: 0 };

    pub const fn new(di: i32, dj: i32) -> Self {
        CellOffset { di, dj }
    }

    pub fn between(from: GridCoord, to: GridCoord) -> Self {
        CellOffset::new(to.i - from.i, to.j - from.j)
    }

    pub fn magnitude(self) -> f64 {
        (self.di as f64).hypot(self.dj as f64)
    }

    pub fn is_zero(self) -> bool {
        self == CellOffset::ZERO
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionEntry {
    Vector(CellOffset),
    Obstacle,
    /// Not reached by the expansion: outside the field domain.
    Outside,
}

/// Direction vectors over the whole grid for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionField {
    width: i32,
    height: i32,
    entries: Vec<DirectionEntry>,
    line: TrendLine,
    radius: u32,
}

impl DirectionField {
    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn get(&self, c: GridCoord) -> DirectionEntry {
        self.entries[(c.j * self.width + c.i) as usize]
    }

    pub fn entries(&self) -> &[DirectionEntry] {
        &self.entries
    }

    pub fn line(&self) -> &TrendLine {
        &self.line
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    /// Cells that carry a vector.
    pub fn domain_size(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e, DirectionEntry::Vector(_)))
            .count()
    }

    /// CSV with one `fx;fy` pair per cell (`OBST` for obstacles, empty when
    /// outside the domain), rows `j` ascending.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.entries.chunks(self.width as usize) {
            let cells: Vec<String> = row
                .iter()
                .map(|e| match e {
                    DirectionEntry::Vector(v) => format!("{};{}", v.di, v.dj),
                    DirectionEntry::Obstacle => "OBST".to_string(),
                    DirectionEntry::Outside => String::new(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Difference to the next cell for every line cell; the destination gets the
/// zero vector. A cell listed twice keeps its last vector.
pub fn raw_direction_vectors(line: &TrendLine) -> BTreeMap<GridCoord, CellOffset> {
    let cells = line.cells();
    let mut raw = BTreeMap::new();
    for (k, &c) in cells.iter().enumerate() {
        let v = cells
            .get(k + 1)
            .map_or(CellOffset::ZERO, |&next| CellOffset::between(c, next));
        raw.insert(c, v);
    }
    raw
}

/// Grows the field outward from the trend line for `radius` rounds.
///
/// In each round every unmarked free cell touching a marked cell picks one of
/// its marked neighbors uniformly at random and stores the unit step toward
/// it; all cells picked in a round become marked together when it ends.
pub fn expand_field(
    raw: &BTreeMap<GridCoord, CellOffset>,
    line: &TrendLine,
    radius: u32,
    env: &GridEnvironment,
    seed: u64,
) -> DirectionField {
    let mut entries: Vec<DirectionEntry> = env
        .passability()
        .iter()
        .map(|&free| if free { DirectionEntry::Outside } else { DirectionEntry::Obstacle })
        .collect();
    let mut marked = vec![false; env.len()];
    for (&c, &v) in raw {
        if env.is_free(c) {
            let k = env.index(c);
            entries[k] = DirectionEntry::Vector(v);
            marked[k] = true;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates = Vec::with_capacity(8);
    let mut frontier = Vec::new();
    for _ in 0..radius {
        frontier.clear();
        for k in 0..env.len() {
            if marked[k] || !matches!(entries[k], DirectionEntry::Outside) {
                continue;
            }
            let c = env.coord(k);
            candidates.clear();
            candidates.extend(env.free_neighbors(c).filter(|n| marked[env.index(*n)]));
            let pick = match candidates.len() {
                0 => continue,
                1 => candidates[0],
                n => candidates[rng.random_range(0..n)],
            };
            frontier.push((k, CellOffset::between(c, pick)));
        }
        if frontier.is_empty() {
            break;
        }
        for &(k, v) in &frontier {
            entries[k] = DirectionEntry::Vector(v);
            marked[k] = true;
        }
    }

    DirectionField {
        width: env.width(),
        height: env.height(),
        entries,
        line: line.clone(),
        radius,
    }
}

#[derive(Debug, Clone, Copy)]
struct Frontier {
    value: f64,
    seq: u64,
    index: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .value
            .total_cmp(&self.value)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Converts a direction field into `M_F` by shortest-cost propagation out of
/// the destination.
///
/// The destination holds `v_0`. A cell carrying a nonzero vector takes its
/// value from the cell the vector points at, plus `l·|f(g)|`, so values sum
/// along the vector chain to the destination. Cells without a vector (outside
/// the domain, or a zero vector away from the destination) take the cheapest
/// free neighbor plus `l·κ`. Obstacles and cells cut off from the
/// destination are `+inf`.
pub fn field_to_matrix(
    field: &DirectionField,
    destination: GridCoord,
    params: &FieldParams,
    env: &GridEnvironment,
) -> Result<FieldMatrix> {
    if !env.in_bounds(destination) || !env.is_free(destination) {
        return Err(Error::invalid(format!("destination {destination} is not a free cell")));
    }
    if field.width != env.width() || field.height != env.height() {
        return Err(Error::invalid("direction field and grid differ in size"));
    }
    // Some(target) for cells that must follow their vector.
    let follow = |k: usize| -> Option<(usize, f64)> {
        match field.entries[k] {
            DirectionEntry::Vector(v) if !v.is_zero() => {
                let t = env.coord(k).offset(v.di, v.dj);
                env.is_free(t).then(|| (env.index(t), params.l * v.magnitude()))
            }
            _ => None,
        }
    };

    let mut values = vec![f64::INFINITY; env.len()];
    let mut done = vec![false; env.len()];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let d = env.index(destination);
    values[d] = params.v_0;
    heap.push(Frontier {
        value: params.v_0,
        seq,
        index: d,
    });

    while let Some(Frontier { value, index, .. }) = heap.pop() {
        if done[index] {
            continue;
        }
        done[index] = true;
        for nb in env.free_neighbors(env.coord(index)) {
            let k = env.index(nb);
            if done[k] || matches!(field.entries[k], DirectionEntry::Obstacle) {
                continue;
            }
            let cand = match follow(k) {
                Some((target, w)) if target == index => value + w,
                Some(_) => continue,
                None => value + params.l * params.kappa,
            };
            if cand < values[k] {
                values[k] = cand;
                seq += 1;
                heap.push(Frontier {
                    value: cand,
                    seq,
                    index: k,
                });
            }
        }
    }
    FieldMatrix::from_values(FieldKind::Navigation, env.width(), env.height(), values)
}
