use std::cmp::Reverse;
use std::collections::BinaryHeap;

use gridcrowd::agent::AgentId;
use gridcrowd::field::{
    build_navigation_field, interpolate_trend_line, FieldParams, TrendDistribution, TrendStep,
};
use gridcrowd::{GridCoord, GridEnvironment, WorldPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_env(rng: &mut ChaCha8Rng, w: i32, h: i32, density: f64) -> GridEnvironment {
    let free: Vec<bool> = (0..w * h).map(|_| rng.random::<f64>() >= density).collect();
    GridEnvironment::from_passability(w, h, 0.4, WorldPoint::new(0.0, 0.0), free).unwrap()
}

/// Octile distances from `src` in integer units (orthogonal, diagonal) compared as f64.
fn dijkstra(env: &GridEnvironment, src: GridCoord) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; env.len()];
    let mut heap = BinaryHeap::new();
    dist[env.index(src)] = 0.0;
    heap.push(Reverse((0u64, env.index(src))));
    // costs scaled by 1e6 to keep the heap on integers
    let mut best = vec![u64::MAX; env.len()];
    best[env.index(src)] = 0;
    while let Some(Reverse((d, k))) = heap.pop() {
        if d > best[k] {
            continue;
        }
        let c = env.coord(k);
        for di in -1..=1 {
            for dj in -1..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let n = GridCoord::new(c.i + di, c.j + dj);
                if !env.in_bounds(n) || !env.is_free(n) {
                    continue;
                }
                let step = if di != 0 && dj != 0 { 1_414_214 } else { 1_000_000 };
                let nk = env.index(n);
                if d + step < best[nk] {
                    best[nk] = d + step;
                    dist[nk] = (d + step) as f64 / 1e6;
                    heap.push(Reverse((d + step, nk)));
                }
            }
        }
    }
    dist
}

fn path_length(cells: &[GridCoord]) -> f64 {
    cells
        .windows(2)
        .map(|w| if w[0].i != w[1].i && w[0].j != w[1].j { std::f64::consts::SQRT_2 } else { 1.0 })
        .sum()
}

#[test]
fn interpolation_threads_a_wall_gap_optimally() {
    let env = GridEnvironment::from_ascii(
        &[
            "..........",
            "..........",
            "#########.",
            "..........",
            "..........",
        ],
        1.0,
    )
    .unwrap();
    let points = [WorldPoint::new(0.5, 4.5), WorldPoint::new(0.5, 0.5)];
    let dest = GridCoord::new(5, 0);
    let line = interpolate_trend_line(&points, dest, &env).unwrap();
    let cells = line.cells();
    assert_eq!(cells[0], GridCoord::new(0, 4));
    assert_eq!(*cells.last().unwrap(), dest);
    assert!(cells.contains(&GridCoord::new(9, 2)));
    for w in cells.windows(2) {
        assert!(w[0].is_adjacent(w[1]));
        assert!(env.is_free(w[1]));
    }
    let legs = [GridCoord::new(0, 4), GridCoord::new(0, 0), dest];
    let want: f64 = legs.windows(2).map(|w| dijkstra(&env, w[0])[env.index(w[1])]).sum();
    assert!((path_length(cells) - want).abs() < 1e-5, "{} vs {want}", path_length(cells));
}

#[test]
fn descent_is_sound_on_random_scenes() {
    let started = std::time::Instant::now();
    let params = FieldParams::default();
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env = random_env(&mut rng, 20, 20, 0.2);
        let free: Vec<GridCoord> = env.free_cells().collect();
        let dest = free[rng.random_range(0..free.len())];
        let steps: Vec<TrendStep> = (0..12)
            .map(|_| {
                let mu = WorldPoint::new(rng.random_range(0.0..8.0), rng.random_range(0.0..8.0));
                TrendStep {
                    mu,
                    sigma_x: rng.random_range(0.01..0.5),
                    sigma_y: rng.random_range(0.01..0.5),
                    rho: rng.random_range(-0.9..0.9),
                }
            })
            .collect();
        let dist = TrendDistribution {
            agent_id: AgentId(seed),
            made_at_step: 0,
            steps,
        };
        let comps = env.components();
        let nav = build_navigation_field(&dist, dest, &params, &env, &comps, seed, seed + 1).unwrap();
        let m = &nav.matrix;
        let reachable = dijkstra(&env, dest);
        for c in env.cells() {
            let v = m.get(c);
            assert_eq!(v.is_finite(), reachable[env.index(c)].is_finite(), "seed {seed} cell {c}");
            if !v.is_finite() || c == dest {
                continue;
            }
            let lower = env.free_neighbors(c).any(|n| m.get(n) < v);
            assert!(lower, "seed {seed}: {c} is a local minimum");
            // greedy descent
            let mut at = c;
            for _ in 0..env.len() {
                if at == dest {
                    break;
                }
                at = env
                    .free_neighbors(at)
                    .min_by(|a, b| m.get(*a).total_cmp(&m.get(*b)))
                    .unwrap();
            }
            assert_eq!(at, dest, "seed {seed}: descent from {c} stalls");
        }
    }
    assert!(started.elapsed().as_secs_f64() < 5.0);
}
