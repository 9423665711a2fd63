use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gridcrowd::field::{astar, build_navigation_field, obstacle_field, FieldParams};
use gridcrowd::GridCoord;
use gridcrowd_bench::{diagonal_trend, pillar_room};

fn bench_astar(c: &mut Criterion) {
    let mut group = c.benchmark_group("astar");
    for size in [20, 60, 120] {
        let env = pillar_room(size);
        let goal = GridCoord::new(size - 1, size - 1);
        group.bench_with_input(BenchmarkId::from_parameter(size), &env, |b, env| {
            b.iter(|| astar(env, GridCoord::new(0, 0), goal).unwrap())
        });
    }
    group.finish();
}

fn bench_navigation(c: &mut Criterion) {
    let params = FieldParams::default();
    let mut group = c.benchmark_group("navigation_field");
    for size in [20, 60, 120] {
        let env = pillar_room(size);
        let comps = env.components();
        let trend = diagonal_trend(&env, 12);
        let dest = GridCoord::new(size - 1, size - 1);
        group.bench_with_input(BenchmarkId::from_parameter(size), &env, |b, env| {
            b.iter(|| build_navigation_field(&trend, dest, &params, env, &comps, 1, 2).unwrap())
        });
    }
    group.finish();
}

fn bench_obstacle(c: &mut Criterion) {
    let params = FieldParams::default();
    let env = pillar_room(120);
    c.bench_function("obstacle_field/120", |b| {
        b.iter(|| obstacle_field(&env, params.delta, params.lambda_o))
    });
}

criterion_group!(benches, bench_astar, bench_navigation, bench_obstacle);
criterion_main!(benches);
