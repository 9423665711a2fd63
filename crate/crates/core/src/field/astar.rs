use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::grid::{GridCoord, GridEnvironment};

/// Shortest 8-connected path between two free cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub cells: Vec<GridCoord>,
    pub orthogonal_steps: usize,
    pub diagonal_steps: usize,
}

impl GridPath {
    /// `orthogonal + diagonal·√2`, recomputed from the step counts so that equal
    /// paths always report bit-identical costs.
    pub fn cost(&self) -> f64 {
        self.orthogonal_steps as f64 + self.diagonal_steps as f64 * SQRT_2
    }

    pub(crate) fn from_cells(cells: Vec<GridCoord>) -> GridPath {
        let diagonal_steps = cells
            .windows(2)
            .filter(|w| w[0].i != w[1].i && w[0].j != w[1].j)
            .count();
        let orthogonal_steps = cells.len().saturating_sub(1) - diagonal_steps;
        GridPath {
            cells,
            orthogonal_steps,
            diagonal_steps,
        }
    }
}

/// Step cost between adjacent cells: 1 orthogonal, √2 diagonal.
pub fn step_cost(a: GridCoord, b: GridCoord) -> f64 {
    if a.i != b.i && a.j != b.j {
        SQRT_2
    } else {
        1.0
    }
}

/// Octile distance; admissible and consistent for unit/√2 step costs.
pub fn octile(a: GridCoord, b: GridCoord) -> f64 {
    let dx = (a.i - b.i).abs() as f64;
    let dy = (a.j - b.j).abs() as f64;
    dx.max(dy) + (SQRT_2 - 1.0) * dx.min(dy)
}

#[derive(Debug, Clone, Copy)]
struct OpenEntry {
    f: f64,
    seq: u64,
    index: usize,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenEntry {}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenEntry {
    // Reversed so BinaryHeap pops the smallest f, then the earliest insertion.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// A* over the free cells of `env` with the octile heuristic.
///
/// Ties on `f` go to the entry pushed first; neighbors are pushed in the fixed
/// neighbor order, so the result is fully deterministic.
pub fn astar(env: &GridEnvironment, start: GridCoord, goal: GridCoord) -> Result<GridPath> {
    for (name, c) in [("start", start), ("goal", goal)] {
        if !env.in_bounds(c) {
            return Err(Error::OutOfRange(format!("{name} {c} outside grid")));
        }
        if !env.is_free(c) {
            return Err(Error::invalid(format!("{name} {c} is an obstacle")));
        }
    }
    if start == goal {
        return Ok(GridPath::from_cells(vec![start]));
    }

    let n = env.len();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;

    let s = env.index(start);
    let goal_index = env.index(goal);
    g[s] = 0.0;
    open.push(OpenEntry {
        f: octile(start, goal),
        seq,
        index: s,
    });

    while let Some(OpenEntry { index, .. }) = open.pop() {
        if closed[index] {
            continue;
        }
        if index == goal_index {
            let mut cells = vec![goal];
            let mut k = index;
            while parent[k] != usize::MAX {
                k = parent[k];
                cells.push(env.coord(k));
            }
            cells.reverse();
            return Ok(GridPath::from_cells(cells));
        }
        closed[index] = true;
        let c = env.coord(index);
        for nb in env.free_neighbors(c) {
            let k = env.index(nb);
            if closed[k] {
                continue;
            }
            let cand = g[index] + step_cost(c, nb);
            if cand < g[k] {
                g[k] = cand;
                parent[k] = index;
                seq += 1;
                open.push(OpenEntry {
                    f: cand + octile(nb, goal),
                    seq,
                    index: k,
                });
            }
        }
    }
    Err(Error::NoPath {
        from: start,
        to: goal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Plain Dijkstra, kept separate from the A* code path.
    fn dijkstra_cost(env: &GridEnvironment, start: GridCoord, goal: GridCoord) -> Option<f64> {
        let n = env.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[env.index(start)] = 0.0;
        loop {
            let mut best = None;
            for k in 0..n {
                if !done[k] && dist[k].is_finite() && best.is_none_or(|b: usize| dist[k] < dist[b]) {
                    best = Some(k);
                }
            }
            let k = best?;
            done[k] = true;
            let c = env.coord(k);
            if c == goal {
                return Some(dist[k]);
            }
            for di in -1..=1 {
                for dj in -1..=1 {
                    let nb = GridCoord::new(c.i + di, c.j + dj);
                    if (di, dj) == (0, 0) || !env.is_free(nb) {
                        continue;
                    }
                    let w = if di != 0 && dj != 0 { 2f64.sqrt() } else { 1.0 };
                    let m = env.index(nb);
                    dist[m] = dist[m].min(dist[k] + w);
                }
            }
        }
    }

    #[test]
    fn straight_line() {
        let env = GridEnvironment::empty(10, 10, 0.4).unwrap();
        let p = astar(&env, GridCoord::new(0, 0), GridCoord::new(0, 5)).unwrap();
        assert_eq!(p.cost(), 5.0);
        assert_eq!(p.cells.len(), 6);
    }

    #[test]
    fn pure_diagonal() {
        let env = GridEnvironment::empty(10, 10, 0.4).unwrap();
        let p = astar(&env, GridCoord::new(0, 0), GridCoord::new(5, 5)).unwrap();
        assert!((p.cost() - 7.0711).abs() < 1e-4);
        assert_eq!(p.diagonal_steps, 5);
    }

    #[test]
    fn errors() {
        let env = GridEnvironment::from_ascii(&["..#..", "..#..", "..#.."], 1.0).unwrap();
        assert!(matches!(
            astar(&env, GridCoord::new(0, 0), GridCoord::new(4, 0)),
            Err(Error::NoPath { .. })
        ));
        assert!(matches!(
            astar(&env, GridCoord::new(2, 0), GridCoord::new(0, 0)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn paths_are_valid_and_optimal_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let free: Vec<bool> = (0..400).map(|_| rng.random::<f64>() >= 0.2).collect();
            let env = GridEnvironment::from_passability(20, 20, 1.0, Default::default(), free).unwrap();
            let pick = |rng: &mut ChaCha8Rng| loop {
                let c = GridCoord::new(rng.random_range(0..20), rng.random_range(0..20));
                if env.is_free(c) {
                    break c;
                }
            };
            let (a, b) = (pick(&mut rng), pick(&mut rng));
            match (astar(&env, a, b), dijkstra_cost(&env, a, b)) {
                (Ok(p), Some(d)) => {
                    assert!((p.cost() - d).abs() < 1e-9);
                    assert_eq!(p.cells.first(), Some(&a));
                    assert_eq!(p.cells.last(), Some(&b));
                    assert!(p.cells.windows(2).all(|w| w[0].is_adjacent(w[1])));
                    assert!(p.cells.iter().all(|&c| env.is_free(c)));
                }
                (Err(Error::NoPath { .. }), None) => {}
                other => panic!("mismatch: {other:?}"),
            }
        }
    }

    #[test]
    fn deterministic() {
        let env = GridEnvironment::empty(15, 15, 1.0).unwrap();
        let a = astar(&env, GridCoord::new(1, 2), GridCoord::new(13, 7)).unwrap();
        let b = astar(&env, GridCoord::new(1, 2), GridCoord::new(13, 7)).unwrap();
        assert_eq!(a, b);
    }
}
