use std::hint::black_box;

use coreg_bench::dataset;
use coreg_core::numerics::to_correlation_isolating;
use coreg_core::{
    build_graph, extract_modules, fit_ols, ols_univariate, run_coreg, sample_covariance, svd_factor_baseline,
    CoregConfig, DEFAULT_ALPHA,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn steps(c: &mut Criterion) {
    let ds = dataset(500, 200, 7);
    let fit = fit_ols(&ds.y, &ds.design).unwrap();
    let cov = sample_covariance(&fit.residuals).unwrap();
    let (corr, _) = to_correlation_isolating(&cov);
    let graph = build_graph(&corr).unwrap();

    let mut g = c.benchmark_group("p500_n200");
    g.sample_size(10);
    g.bench_function("ols_univariate", |b| {
        b.iter(|| ols_univariate(black_box(&ds.y), &ds.design, DEFAULT_ALPHA))
    });
    g.bench_function("residual_correlation", |b| {
        b.iter(|| to_correlation_isolating(&sample_covariance(black_box(&fit.residuals)).unwrap()))
    });
    g.bench_function("extract_modules_lambda_1.5", |b| {
        b.iter(|| extract_modules(black_box(&graph), 1.5))
    });
    g.bench_function("run_coreg", |b| {
        b.iter(|| run_coreg(black_box(&ds.y), &ds.design, &CoregConfig::default(), None))
    });
    g.bench_function("svd_factor_k3", |b| {
        b.iter(|| svd_factor_baseline(black_box(&ds.y), &ds.design, 3, DEFAULT_ALPHA))
    });
    g.finish();
}

fn scaling(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_coreg_by_p");
    g.sample_size(10);
    for p in [100, 200, 400] {
        let ds = dataset(p, 200, 3);
        g.bench_with_input(BenchmarkId::from_parameter(p), &ds, |b, ds| {
            b.iter(|| run_coreg(&ds.y, &ds.design, &CoregConfig::default(), None))
        });
    }
    g.finish();
}

criterion_group!(benches, steps, scaling);
criterion_main!(benches);
