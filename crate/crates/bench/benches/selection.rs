use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tokendrop_bench::{scores, uniform};
use tokendrop_core::bitonic::bitonic_median;
use tokendrop_core::omsel::{omsel, OmselConfig};
use tokendrop_core::{RingParams, Session};

fn median(c: &mut Criterion) {
    let mut group = c.benchmark_group("median");
    for n in [16usize, 64, 256] {
        let mcn = scores(n).unwrap();
        let flat = uniform(n);
        group.bench_with_input(BenchmarkId::new("omsel_mcn", n), &mcn, |b, v| {
            b.iter(|| {
                let mut s = Session::new(RingParams::default(), 1);
                let x = s.share_reals(v).unwrap();
                omsel(&mut s, &x, &OmselConfig::default()).unwrap()
            })
        });
        group.bench_with_input(BenchmarkId::new("omsel_uniform", n), &flat, |b, v| {
            b.iter(|| {
                let mut s = Session::new(RingParams::default(), 1);
                let x = s.share_reals(v).unwrap();
                omsel(&mut s, &x, &OmselConfig::default()).unwrap()
            })
        });
        group.bench_with_input(BenchmarkId::new("bitonic", n), &mcn, |b, v| {
            b.iter(|| {
                let mut s = Session::new(RingParams::default(), 1);
                let x = s.share_reals(v).unwrap();
                bitonic_median(&mut s, &x).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, median);
criterion_main!(benches);
