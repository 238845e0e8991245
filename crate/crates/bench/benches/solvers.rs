use criterion::{black_box, criterion_group, criterion_main, Criterion};

use fogopt::baselines::{aop, rop};
use fogopt::branching::Preset;
use fogopt::ffbd::{self, fast_feasible, fast_infeasible, solve_sp2, Mode};
use fogopt::harness::table_one_profile;
use fogopt::ibba;
use fogopt::model::{offload_benefit_threshold, Task};
use fogopt::oracle::enumerate_optimum;
use fogopt_bench::{medium_instance, small_instance, subproblems};

fn threshold(c: &mut Criterion) {
    let task = Task::from_megabytes(0, 5.5, 0.55, 1.0, 10.0);
    let profile = table_one_profile(4);
    c.bench_function("threshold", |b| {
        b.iter(|| offload_benefit_threshold(black_box(&task), &profile, 0))
    });
}

fn node_checks(c: &mut Criterion) {
    let subs = subproblems();
    let mut g = c.benchmark_group("node_check");
    g.bench_function("fast_infeasible", |b| {
        b.iter(|| subs.iter().filter(|s| fast_infeasible(s).is_some()).count())
    });
    g.bench_function("fast_feasible", |b| {
        b.iter(|| subs.iter().filter(|s| fast_feasible(s).is_some()).count())
    });
    g.sample_size(20);
    g.bench_function("slack_program", |b| {
        b.iter(|| {
            subs.iter()
                .map(|s| solve_sp2(s, None).unwrap().objective)
                .sum::<f64>()
        })
    });
    g.finish();
}

fn exact_methods(c: &mut Criterion) {
    let inst = medium_instance();
    let mut g = c.benchmark_group("medium_instance");
    g.sample_size(10);
    g.bench_function("IBBA-LFC", |b| {
        b.iter(|| ibba::solve(&inst, Preset::Lfc).unwrap())
    });
    g.bench_function("IBBA-LCF", |b| {
        b.iter(|| ibba::solve(&inst, Preset::Lcf).unwrap())
    });
    g.bench_function("FFBD-S", |b| {
        b.iter(|| ffbd::run(&inst, Mode::S, None).unwrap())
    });
    g.bench_function("FFBD-F", |b| {
        b.iter(|| ffbd::run(&inst, Mode::F, None).unwrap())
    });
    g.bench_function("AOP", |b| b.iter(|| aop(&inst).unwrap()));
    g.bench_function("ROP", |b| b.iter(|| rop(&inst).unwrap()));
    g.finish();

    let small = small_instance();
    let mut g = c.benchmark_group("small_instance");
    g.sample_size(10);
    g.bench_function("oracle", |b| b.iter(|| enumerate_optimum(&small).unwrap()));
    g.bench_function("FFBD-F", |b| {
        b.iter(|| ffbd::run(&small, Mode::F, None).unwrap())
    });
    g.finish();
}

criterion_group!(benches, threshold, node_checks, exact_methods);
criterion_main!(benches);
