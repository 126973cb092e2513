use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use fex_bench::planted_fixture;
use fex_core::oracle::empirical_attribution;

fn exhaustive_oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle_enumeration");
    group.sample_size(10);
    for n in [8usize, 10, 12] {
        let fx = planted_fixture(n, 64);
        let x = fx.samples[0].features.clone();
        group.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| empirical_attribution(&fx.predictor, black_box(x), 1).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, exhaustive_oracle);
criterion_main!(benches);
