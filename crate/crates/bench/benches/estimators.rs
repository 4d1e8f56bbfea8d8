use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gpca::covariance::{adaptive_threshold, residual_series, sample_col_cov};
use gpca::linalg::{sym_eig, sym_eig_topk};
use gpca::simulation::{gen_series, CovCase, DgpConfig};
use gpca::{data_driven_gpca, pe_estimate, FitSettings, IterationOptions, Side};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn case2(t: usize) -> DgpConfig {
    DgpConfig { cov_case: CovCase::Case2, t, p1: 20, p2: t, seed: 1, ..Default::default() }
}

fn fits(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    let settings = FitSettings::default();
    for t in [50, 100, 200] {
        let (x, _) = gen_series(&case2(t)).unwrap();
        group.bench_with_input(BenchmarkId::new("pe", t), &x, |b, x| {
            b.iter(|| pe_estimate(x, 3, 3, &IterationOptions::default()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("gpca", t), &x, |b, x| {
            b.iter(|| data_driven_gpca(x, 3, 3, &settings.threshold, &settings.iteration).unwrap())
        });
    }
    group.finish();
}

fn thresholding(c: &mut Criterion) {
    let mut group = c.benchmark_group("threshold");
    for t in [100, 200] {
        let (x, truth) = gen_series(&case2(t)).unwrap();
        let e = residual_series(&x, &truth.r, &truth.c).unwrap();
        let s = sample_col_cov(&e);
        group.bench_function(BenchmarkId::new("column", t), |b| b.iter(|| adaptive_threshold(&s, &e, Side::Col, 1.0).unwrap()));
    }
    group.finish();
}

fn eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("eigen");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in [100, 200, 400] {
        // Wishart-like bulk without a gap, and the same bulk under three spikes
        // (the shape of the estimators' aggregates).
        let a = DMatrix::from_fn(p, p, |_, _| rng.random::<f64>() - 0.5);
        let bulk = &a * a.transpose() / p as f64;
        let l = DMatrix::from_fn(p, 3, |_, _| rng.random::<f64>() - 0.5);
        let spiked = &bulk + &l * l.transpose() * 10.0;
        group.bench_function(BenchmarkId::new("dense", p), |b| b.iter(|| sym_eig(&spiked).unwrap()));
        group.bench_function(BenchmarkId::new("top3_spiked", p), |b| b.iter(|| sym_eig_topk(&spiked, 3).unwrap()));
        group.bench_function(BenchmarkId::new("top3_bulk", p), |b| b.iter(|| sym_eig_topk(&bulk, 3).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, fits, thresholding, eigen);
criterion_main!(benches);
