//! Benchmarks for the three hot paths: Cox Newton fits, the exact frailty
//! E-step, and Monte-Carlo p-value combination.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use survrisk::coxph::{fit_cox, FitOptions};
use survrisk::dataset::ClusterSummary;
use survrisk::frailty::{estep_posterior, fit_correlated_frailty, EmOptions, FrailtyParams};
use survrisk::pcombine::{monte_carlo_pvalue, CombinerKind, MonteCarloConfig};
use survrisk::simulate::{simulate_dataset, SimConfig};

fn bench_cox(c: &mut Criterion) {
    let mut group = c.benchmark_group("cox_fit");
    for &n_per in &[10usize, 50, 200] {
        let config = SimConfig::enlarged(10, n_per, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let data = simulate_dataset(&config, &mut rng).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(10 * n_per), &data, |b, d| {
            b.iter(|| fit_cox(d, 1, None, &FitOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn bench_estep(c: &mut Criterion) {
    let params = FrailtyParams {
        nu0: 1.5,
        nu: vec![2.0, 2.5, 3.0],
    };
    let mut group = c.benchmark_group("estep");
    for &d_per_cause in &[2usize, 5, 10] {
        let summary = ClusterSummary {
            cluster: 1,
            n_subjects: 3 * d_per_cause,
            event_counts: vec![d_per_cause; 3],
            hazard_loads: vec![1.3, 0.9, 1.7],
        };
        group.bench_with_input(
            BenchmarkId::from_parameter(3 * d_per_cause),
            &summary,
            |b, s| b.iter(|| estep_posterior(s, &params, 10_000_000).unwrap()),
        );
    }
    group.finish();
}

fn bench_em(c: &mut Criterion) {
    let config = SimConfig::enlarged(20, 15, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let data = simulate_dataset(&config, &mut rng).unwrap();
    c.bench_function("correlated_em_20x15", |b| {
        b.iter(|| fit_correlated_frailty(&data, &EmOptions::default()).unwrap())
    });
}

fn bench_combiner(c: &mut Criterion) {
    let ps = [0.01, 0.2, 0.6, 0.04, 0.33];
    let mut group = c.benchmark_group("mc_combiner");
    for &m in &[10_000usize, 100_000] {
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, &m| {
            b.iter(|| {
                monte_carlo_pvalue(
                    &ps,
                    CombinerKind::Fisher,
                    &MonteCarloConfig { m, seed: 1 },
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_cox, bench_estep, bench_em, bench_combiner);
criterion_main!(benches);
