use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use massynth_bench::{line_team, random_mdp, reach_tail};
use massynth_core::synthesis::{Objective, SynthesisConfig};
use massynth_core::{build_product, solve_problem1, AgentId, Bound, ProductOptions, SolveConfig};

fn product(c: &mut Criterion) {
    let mut group = c.benchmark_group("product");
    for (n, w) in [(2, 8), (3, 6), (4, 5)] {
        let team = line_team(n, w);
        let cluster: Vec<AgentId> = team.ids().collect();
        group.bench_with_input(BenchmarkId::new("build", format!("{n}x{w}")), &team, |b, team| {
            b.iter(|| build_product(team, &cluster, ProductOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn value_iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("value_iteration");
    let cfg = SynthesisConfig::default();
    // the larger size crosses the parallel sweep threshold
    for n in [1_000, 20_000] {
        let model = random_mdp(n, 7);
        let bounded = reach_tail(n, Bound::Steps(20));
        let unbounded = reach_tail(n, Bound::Unbounded);
        group.bench_with_input(BenchmarkId::new("bounded_20", n), &model, |b, m| {
            b.iter(|| bounded.extremal(m, Objective::Max, &cfg))
        });
        group.bench_with_input(BenchmarkId::new("unbounded", n), &model, |b, m| {
            b.iter(|| unbounded.extremal(m, Objective::Min, &cfg))
        });
    }
    group.finish();
}

fn end_to_end(c: &mut Criterion) {
    let team = line_team(4, 4);
    c.bench_function("solve/line_4x4", |b| {
        b.iter(|| solve_problem1(&team, &SolveConfig::default()).unwrap())
    });
}

criterion_group!(benches, product, value_iteration, end_to_end);
criterion_main!(benches);
