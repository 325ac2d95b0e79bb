use clinch_bench::{generated_markets, worst_case_markets};
use clinch_core::auction::run_auction;
use clinch_core::welfare::lw_optimal;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn auction(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_auction");
    for (k, inst) in worst_case_markets(&[4, 32, 256]) {
        group.bench_with_input(BenchmarkId::new("worst_case", k), &inst, |b, inst| b.iter(|| run_auction(black_box(inst))));
    }
    for n in [4, 8] {
        for (family, inst) in generated_markets(n, 12, 11) {
            group.bench_with_input(BenchmarkId::new(family, n), &inst, |b, inst| b.iter(|| run_auction(black_box(inst))));
        }
    }
    group.finish();
}

fn liquid_optimum(c: &mut Criterion) {
    let mut group = c.benchmark_group("lw_optimal");
    for n in [4, 8, 10] {
        for (family, inst) in generated_markets(n, 12, 11) {
            group.bench_with_input(BenchmarkId::new(family, n), &inst, |b, inst| b.iter(|| lw_optimal(black_box(inst))));
        }
    }
    group.finish();
}

criterion_group!(benches, auction, liquid_optimum);
criterion_main!(benches);
