use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ipv_bench::prepared;
use ipv_core::pipeline::{diagnose_prepared, solve_target};
use ipv_core::{build_strict_feasibility, to_standard_form, SolverConfig, Variant};

fn build(c: &mut Criterion) {
    let mut group = c.benchmark_group("build");
    for depth in [2, 6, 12] {
        let prep = prepared(depth, 0);
        let target = prep.targets(None).unwrap()[0];
        let margin = prep.margin(target).unwrap();
        group.bench_with_input(BenchmarkId::new("standard-form", depth), &prep, |b, prep| {
            b.iter(|| to_standard_form(&prep.relaxation(black_box(&margin), Variant::Base, None).unwrap()))
        });
        let std = to_standard_form(&prep.relaxation(&margin, Variant::Base, None).unwrap());
        group.bench_with_input(BenchmarkId::new("strict-feasibility", depth), &std, |b, p| {
            b.iter(|| build_strict_feasibility(black_box(p)).unwrap())
        });
    }
    group.finish();
}

fn pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    let cfg = SolverConfig::default();
    for depth in [2, 6] {
        let prep = prepared(depth, 0);
        let target = prep.targets(None).unwrap()[0];
        group.bench_with_input(BenchmarkId::new("verify-target", depth), &prep, |b, prep| {
            b.iter(|| solve_target(prep, target, Variant::Base, None, &cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("diagnose", depth), &prep, |b, prep| {
            b.iter(|| diagnose_prepared(prep, Variant::Base, None, &SolverConfig::diagnostic()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, build, pipeline);
criterion_main!(benches);
