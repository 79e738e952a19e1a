//! Acceptance gate: one test (one pass/fail line) per release criterion.
//!
//! Run with `cargo test --test acceptance`. Each test asserts the full
//! criterion, so a single `ok`/`FAILED` line summarizes it.

#[path = "../../core/tests/common/mod.rs"]
mod quadrature;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use survrisk::coxph::{self, FitOptions};
use survrisk::dataset::{self, quantile_sorted, ClusterSummary, GridSpec};
use survrisk::frailty::{
    estep_posterior, fit_correlated_frailty, fit_independent_frailty, frailty_moments, EmOptions,
    FrailtyParams,
};
use survrisk::pcombine::{self, CombinerKind, MonteCarloConfig};
use survrisk::simulate::{self, SimConfig};
use survrisk::threshold::{self, Criterion, QuartileStart, ScanConfig};
use survrisk::{CompetingRisksDataset, SurvivalRecord};

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(values, 0.5)
}

/// Single-cause exponential data with log-HR jumps planted at gene
/// percentile cutoffs; ~17% censoring.
fn planted_data(n: usize, genes: &[(&str, f64, f64)], seed: u64) -> CompetingRisksDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gene_vals: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut loghr = vec![0.0; n];
    for &(name, pct, b) in genes {
        let vals: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let cut = quantile_sorted(&sorted, pct);
        for (l, &v) in loghr.iter_mut().zip(&vals) {
            if v >= cut {
                *l += b;
            }
        }
        gene_vals.insert(name.to_string(), vals);
    }
    let records = (0..n)
        .map(|i| {
            let t: f64 = -rng.gen::<f64>().ln() / loghr[i].exp();
            let c: f64 = -rng.gen::<f64>().ln() / 0.2;
            SurvivalRecord {
                id: format!("s{i}"),
                time: t.min(c),
                status: usize::from(t <= c),
                covariates: vec![],
                cluster: None,
            }
        })
        .collect();
    CompetingRisksDataset::new(records, 1, vec![], gene_vals).unwrap()
}

fn percentile_of(values: &[f64], cutoff: f64) -> f64 {
    100.0 * values.iter().filter(|&&v| v < cutoff).count() as f64 / values.len() as f64
}

#[test]
fn criterion_01_frailty_moment_exactness() {
    let params = FrailtyParams {
        nu0: 1.5,
        nu: vec![2.0, 2.5, 3.0],
    };
    let start = Instant::now();
    let m = frailty_moments(&params).unwrap();
    let elapsed = start.elapsed();
    // published values are printed to 3 decimals (0.377 and 0.353 are
    // truncations of 0.37796 and 0.35355)
    for (got, want) in m.variances.iter().zip([0.286, 0.250, 0.222]) {
        assert!((got - want).abs() < 1e-3, "variance {got} vs {want}");
    }
    for ((a, b), want) in [(0, 1), (0, 2), (1, 2)].into_iter().zip([0.401, 0.377, 0.353]) {
        let got = m.correlations[a][b];
        assert!((got - want).abs() < 1e-3, "rho[{a}][{b}] {got} vs {want}");
    }
    assert!(elapsed.as_micros() < 1000, "took {elapsed:?}, budget 1 ms");
}

#[test]
fn criterion_02_generator_fidelity() {
    let start = Instant::now();
    let config = SimConfig::enlarged(100_000, 1, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let draws = simulate::draw_frailties(&config, &mut rng).unwrap();
    let truth = frailty_moments(&config.frailty_params()).unwrap();
    let n = draws.len() as f64;
    let j = config.num_causes;
    let means: Vec<f64> = (0..j)
        .map(|c| draws.iter().map(|w| w[c]).sum::<f64>() / n)
        .collect();
    for c in 0..j {
        let dev: Vec<f64> = draws.iter().map(|w| w[c] - means[c]).collect();
        let var = dev.iter().map(|d| d * d).sum::<f64>() / (n - 1.0);
        let mu4 = dev.iter().map(|d| d.powi(4)).sum::<f64>() / n;
        let se_var = ((mu4 - var * var) / n).sqrt();
        assert!(
            (var - truth.variances[c]).abs() < 3.0 * se_var,
            "cause {c}: sample variance {var} vs {} (3 SE = {})",
            truth.variances[c],
            3.0 * se_var
        );
        for c2 in (c + 1)..j {
            let dev2: Vec<f64> = draws.iter().map(|w| w[c2] - means[c2]).collect();
            let var2 = dev2.iter().map(|d| d * d).sum::<f64>() / (n - 1.0);
            let cov = dev.iter().zip(&dev2).map(|(a, b)| a * b).sum::<f64>() / (n - 1.0);
            let r = cov / (var * var2).sqrt();
            let rho = truth.correlations[c][c2];
            let se_r = (1.0 - rho * rho) / n.sqrt();
            assert!(
                (r - rho).abs() < 3.0 * se_r,
                "pair ({c},{c2}): sample correlation {r} vs {rho} (3 SE = {})",
                3.0 * se_r
            );
        }
    }
    assert!(start.elapsed().as_secs_f64() < 5.0, "budget 5 s");
}

#[test]
fn criterion_03_estimator_consistency() {
    let start = Instant::now();
    let reps = 50;
    let options = EmOptions::default();
    let results: Vec<_> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let config = SimConfig::enlarged(60, 20, 0);
            let mut rng = simulate::replicate_rng(config.seed, r);
            let data = simulate::simulate_dataset(&config, &mut rng).unwrap();
            let corr = fit_correlated_frailty(&data, &options).unwrap();
            let indep = fit_independent_frailty(&data, &options).unwrap();
            let age: Vec<f64> = corr.per_cause.iter().map(|f| f.beta[0]).collect();
            let xi = corr.moments.variances.clone();
            let rho = vec![
                corr.moments.correlations[0][1],
                corr.moments.correlations[0][2],
                corr.moments.correlations[1][2],
            ];
            let indep_var: Vec<f64> = indep.iter().map(|f| f.frailty_variance).collect();
            (xi, rho, age, indep_var)
        })
        .collect();

    let truth = frailty_moments(&FrailtyParams {
        nu0: 1.5,
        nu: vec![2.0, 2.5, 3.0],
    })
    .unwrap();
    let rho_truth = [
        truth.correlations[0][1],
        truth.correlations[0][2],
        truth.correlations[1][2],
    ];
    let beta_age_truth = [-0.06, -0.05, -0.03];

    let mut median_xi = [0.0; 3];
    for c in 0..3 {
        let mut xs: Vec<f64> = results.iter().map(|r| r.0[c]).collect();
        let med = median(&mut xs);
        median_xi[c] = med;
        assert!(
            (med - truth.variances[c]).abs() <= 0.07,
            "median xi_{c} = {med} vs {}",
            truth.variances[c]
        );
        let mut rs: Vec<f64> = results.iter().map(|r| r.1[c]).collect();
        let med_r = median(&mut rs);
        assert!(
            (med_r - rho_truth[c]).abs() <= 0.10,
            "median rho pair {c} = {med_r} vs {}",
            rho_truth[c]
        );
        let mut bs: Vec<f64> = results.iter().map(|r| r.2[c]).collect();
        let med_b = median(&mut bs);
        assert!(
            (med_b - beta_age_truth[c]).abs() < 0.05,
            "median age beta cause {} = {med_b} vs {}",
            c + 1,
            beta_age_truth[c]
        );
    }

    // qualitative: on the same datasets the misspecified independent fits
    // collapse to the boundary more often than the correlated model, and
    // the collapse-vs-recovered pattern occurs in multiple replicates
    // while its reverse stays rarer
    let mut indep_boundary = 0;
    let mut corr_boundary = 0;
    let mut pattern = 0;
    let mut reverse = 0;
    for r in &results {
        for c in 0..3 {
            let (xi_hat, indep_var) = (r.0[c], r.3[c]);
            indep_boundary += usize::from(indep_var < 1e-4);
            corr_boundary += usize::from(xi_hat < 1e-4);
            pattern += usize::from(indep_var < 1e-4 && xi_hat > 1e-2);
            reverse += usize::from(xi_hat < 1e-4 && indep_var > 1e-2);
        }
    }
    assert!(
        indep_boundary > corr_boundary,
        "independent fits at the boundary ({indep_boundary}) not more often than correlated ({corr_boundary})"
    );
    assert!(
        pattern >= 5 && pattern > reverse,
        "boundary-collapse pattern {pattern} vs reverse {reverse}"
    );
    assert!(median_xi.iter().all(|&m| m > 0.05), "correlated fit at boundary");

    assert!(start.elapsed().as_secs_f64() < 900.0, "budget 15 min");
}

#[test]
fn criterion_04_em_ascent() {
    let options = EmOptions::default();
    let fits: Vec<_> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let config = SimConfig::enlarged(10, 12, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let data = simulate::simulate_dataset(&config, &mut rng).unwrap();
            fit_correlated_frailty(&data, &options).unwrap()
        })
        .collect();
    for (i, fit) in fits.iter().enumerate() {
        for w in fit.loglik_trace.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-6,
                "fit {i}: log-likelihood decreased {} -> {}",
                w[0],
                w[1]
            );
        }
    }
}

#[test]
fn criterion_05_estep_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..500 {
        let j = rng.gen_range(1..=3);
        let params = FrailtyParams {
            nu0: rng.gen_range(0.8..4.0),
            nu: (0..j).map(|_| rng.gen_range(0.8..4.0)).collect(),
        };
        let mut d = vec![0usize; j];
        for _ in 0..rng.gen_range(0..=6) {
            d[rng.gen_range(0..j)] += 1;
        }
        let h: Vec<f64> = (0..j).map(|_| rng.gen_range(0.0..3.0)).collect();
        let s = ClusterSummary {
            cluster: 1,
            n_subjects: d.iter().sum::<usize>().max(1),
            event_counts: d.clone(),
            hazard_loads: h.clone(),
        };
        let post = estep_posterior(&s, &params, 1_000_000).unwrap();
        let oracle = quadrature::quadrature_posterior(&params, &d, &h);
        worst = worst
            .max(quadrature::rel_err(post.e_shared, oracle.e_shared))
            .max(quadrature::rel_err(
                post.log_marginal.exp(),
                oracle.log_marginal.exp(),
            ));
        for (a, b) in post.e_specific.iter().zip(&oracle.e_specific) {
            worst = worst.max(quadrature::rel_err(*a, *b));
        }
        checked += 1;
    }
    assert_eq!(checked, 500);
    assert!(worst < 1e-8, "worst relative error {worst:.3e}");
}

#[test]
fn criterion_06_cox_correctness() {
    // (a) analytic gradient/Hessian vs central finite differences
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 60;
    let times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..5.0)).collect();
    let statuses: Vec<usize> = (0..n).map(|_| rng.gen_range(0..=2)).collect();
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let beta = [0.3, -0.2, 0.1];
    let (_, grad, hess) =
        coxph::partial_loglik(&beta, &times, &statuses, &x, 1, None).unwrap();
    let eps = 1e-5;
    for a in 0..3 {
        let mut bp = beta;
        let mut bm = beta;
        bp[a] += eps;
        bm[a] -= eps;
        let (vp, gp, _) = coxph::partial_loglik(&bp, &times, &statuses, &x, 1, None).unwrap();
        let (vm, gm, _) = coxph::partial_loglik(&bm, &times, &statuses, &x, 1, None).unwrap();
        let fd_grad = (vp - vm) / (2.0 * eps);
        assert!(
            (grad[a] - fd_grad).abs() / fd_grad.abs().max(1.0) < 1e-5,
            "grad[{a}] {} vs FD {fd_grad}",
            grad[a]
        );
        for b in 0..3 {
            let fd_hess = (gp[b] - gm[b]) / (2.0 * eps);
            assert!(
                (hess[a][b] - fd_hess).abs() / fd_hess.abs().max(1.0) < 1e-3,
                "hess[{a}][{b}] {} vs FD {fd_hess}",
                hess[a][b]
            );
        }
    }

    // (b) null-model baseline == Nelson-Aalen on a hand-checked instance:
    // times 1,2,2,3 with statuses 1,1,0,1 -> 1/4, +1/3, +1/1
    let base = coxph::breslow_baseline(
        &[],
        &[1.0, 2.0, 2.0, 3.0],
        &[1, 1, 0, 1],
        &[vec![], vec![], vec![], vec![]],
        1,
        None,
    )
    .unwrap();
    let expected = [0.25, 0.25 + 1.0 / 3.0, 0.25 + 1.0 / 3.0 + 1.0];
    for ((_, got), want) in base.iter().zip(expected) {
        assert!((got - want).abs() < 1e-15, "baseline {got} vs {want}");
    }

    // (c) coefficient recovery at n=2000 (frailty switched off so the
    // marginal model is the fitted model)
    let config = SimConfig {
        unit_frailty: true,
        ..SimConfig::enlarged(100, 20, 3)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let data = simulate::simulate_dataset(&config, &mut rng).unwrap();
    for cause in 1..=3 {
        let fit = coxph::fit_cox(&data, cause, None, &FitOptions::default()).unwrap();
        for (i, (&b, &truth)) in fit.beta.iter().zip(&config.beta[cause - 1]).enumerate() {
            assert!(
                (b - truth).abs() < 3.0 * fit.standard_errors[i],
                "cause {cause} beta[{i}] = {b} vs {truth} (SE {})",
                fit.standard_errors[i]
            );
        }
    }
}

#[test]
fn criterion_07_combiner_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let m = 100_000;
    for set in 0..50 {
        let n = rng.gen_range(2..=8);
        let ps: Vec<f64> = (0..n).map(|_| rng.gen_range(0.001..0.999)).collect();
        for (kind, analytic) in [
            (CombinerKind::Fisher, pcombine::fisher_analytic(&ps).unwrap()),
            (CombinerKind::Tippett, pcombine::tippett_analytic(&ps).unwrap()),
        ] {
            let mc = pcombine::monte_carlo_pvalue(
                &ps,
                kind,
                &MonteCarloConfig {
                    m,
                    seed: 10_000 + set as u64,
                },
            )
            .unwrap();
            let se = (analytic * (1.0 - analytic) / m as f64).sqrt();
            assert!(
                (mc.p_uncorrected - analytic).abs() <= 3.0 * se.max(1e-5),
                "set {set} {kind:?}: MC {} vs analytic {analytic} (3 SE = {})",
                mc.p_uncorrected,
                3.0 * se
            );
        }
    }

    // joint-null uniformity of the combined p over 1000 seeded runs
    for kind in [CombinerKind::Fisher, CombinerKind::MudholkarGeorge] {
        let mut combined: Vec<f64> = (0..1000u64)
            .into_par_iter()
            .map(|seed| {
                let mut r = ChaCha8Rng::seed_from_u64(7000 + seed);
                let ps: Vec<f64> = (0..5).map(|_| r.gen::<f64>()).collect();
                pcombine::monte_carlo_pvalue(
                    &ps,
                    kind,
                    &MonteCarloConfig { m: 4000, seed },
                )
                .unwrap()
                .p_corrected
            })
            .collect();
        combined.sort_by(|a, b| a.total_cmp(b));
        let n = combined.len() as f64;
        let ks = combined
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let lo = i as f64 / n;
                let hi = (i + 1) as f64 / n;
                (p - lo).abs().max((hi - p).abs())
            })
            .fold(0.0f64, f64::max);
        // KS critical value at alpha = 0.01 for n = 1000
        let critical = 1.628 / n.sqrt();
        assert!(ks < critical, "{kind:?}: KS {ks} >= {critical}");
    }
}

#[test]
fn criterion_08_threshold_recovery() {
    let config = ScanConfig {
        criterion: Criterion::MinP,
        cause: 1,
        grid: GridSpec::Percentiles,
        ..ScanConfig::default()
    };

    // (a) single planted cutpoint: HR 2 at the 60th percentile, n = 500
    let hits: usize = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let data = planted_data(500, &[("g", 0.60, 2f64.ln())], 100 + seed);
            let scan = threshold::scan_single_gene(&data, "g", &config).unwrap();
            let pct = percentile_of(data.gene("g").unwrap(), scan.best_cutoff(Criterion::MinP));
            usize::from((pct - 60.0).abs() <= 5.0)
        })
        .sum();
    assert!(hits >= 90, "single cutpoint recovered in {hits}/100");

    // (b) stepwise recovers two independent planted cutoffs
    let genes = [("a", 0.60, 2f64.ln()), ("b", 0.40, 2f64.ln())];
    let hits2: usize = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let data = planted_data(700, &genes, 300 + seed);
            let names = ["a".to_string(), "b".to_string()];
            // run every quartile start and judge the best row, as the
            // search procedure does
            let step = QuartileStart::ALL
                .iter()
                .map(|&s| threshold::stepwise_multi_gene(&data, &names, s, &config).unwrap())
                .min_by(|x, y| {
                    x.final_p_values
                        .last()
                        .unwrap()
                        .total_cmp(y.final_p_values.last().unwrap())
                })
                .unwrap();
            let ok = step.ordering.iter().zip(&step.cutoffs).all(|(g, &c)| {
                let planted = if g == "a" { 60.0 } else { 40.0 };
                (percentile_of(data.gene(g).unwrap(), c) - planted).abs() <= 5.0
            });
            usize::from(ok)
        })
        .sum();
    assert!(hits2 >= 90, "stepwise pair recovered in {hits2}/100");

    // (c) a dominant gene gets the same cutoff in every ordering
    let data = planted_data(
        600,
        &[("dom", 0.60, 1.6), ("weak", 0.40, 0.15)],
        77,
    );
    let names = ["dom".to_string(), "weak".to_string()];
    let report =
        threshold::all_orderings(&data, &names, &QuartileStart::ALL, &config, 100).unwrap();
    assert_eq!(report.rows.len(), 6, "2 orderings x 3 starts");
    // the consistency map lists *distinct* selected cutoffs per gene, so
    // perfect agreement across orderings is exactly one entry
    let dom = &report.consistency["dom"];
    assert_eq!(
        dom.len(),
        1,
        "dominant-gene cutoffs differ across orderings: {dom:?}"
    );
}

#[test]
fn criterion_09_pvalue_variance_anticorrelation() {
    let config = ScanConfig {
        criterion: Criterion::MaxFrailtyVariance,
        cause: 1,
        ..ScanConfig::default()
    };
    let mut rs = Vec::new();
    for seed in [11u64, 12, 13] {
        let data = planted_data(250, &[("g", 0.5, 1.2)], seed);
        let scan = threshold::scan_single_gene(&data, "g", &config).unwrap();
        rs.push(threshold::pvalue_variance_correlation(&scan).unwrap());
    }
    for (i, r) in rs.iter().enumerate() {
        assert!(*r < -0.2, "scan {i}: Spearman {r} not below -0.2");
    }
}

#[test]
fn criterion_10_cif_exactness() {
    // brute-force Aalen-Johansen on every instance with <= 5 subjects
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..200 {
        let n = rng.gen_range(1..=5);
        let records: Vec<SurvivalRecord> = (0..n)
            .map(|i| SurvivalRecord {
                id: format!("s{i}"),
                // small integer grid to force ties
                time: rng.gen_range(1..=3) as f64,
                status: rng.gen_range(0..=2),
                covariates: vec![],
                cluster: None,
            })
            .collect();
        let data =
            CompetingRisksDataset::new(records.clone(), 2, vec![], BTreeMap::new()).unwrap();

        for cause in 1..=2 {
            let curve = dataset::cumulative_incidence(&data, cause).unwrap();
            // brute force: walk distinct times upward, tracking S(t-)
            let mut times: Vec<f64> = records.iter().map(|r| r.time).collect();
            times.sort_by(|a, b| a.total_cmp(b));
            times.dedup();
            let mut surv = 1.0;
            let mut cif = 0.0;
            for &t in &times {
                let at_risk = records.iter().filter(|r| r.time >= t).count() as f64;
                let d_cause =
                    records.iter().filter(|r| r.time == t && r.status == cause).count() as f64;
                let d_any =
                    records.iter().filter(|r| r.time == t && r.status != 0).count() as f64;
                cif += surv * d_cause / at_risk;
                surv *= 1.0 - d_any / at_risk;
                assert!(
                    (curve.eval(t) - cif).abs() < 1e-15,
                    "trial {trial} cause {cause} t={t}: {} vs {cif}",
                    curve.eval(t)
                );
            }
        }

        // sum of CIFs plus all-cause survival is identically 1
        let km = dataset::kaplan_meier(&data).unwrap();
        let c1 = dataset::cumulative_incidence(&data, 1).unwrap();
        let c2 = dataset::cumulative_incidence(&data, 2).unwrap();
        for &t in &[0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 10.0] {
            let total = km.eval(t) + c1.eval(t) + c2.eval(t);
            assert!((total - 1.0).abs() < 1e-12, "trial {trial} t={t}: {total}");
        }
    }
}

#[test]
fn criterion_11_cli_determinism() {
    use std::process::Command;
    let run = |threads: &str, dir: &std::path::Path| {
        let out = Command::new(env!("CARGO_BIN_EXE_survrisk"))
            .env("RAYON_NUM_THREADS", threads)
            .args([
                "replicate-study",
                "--preset",
                "paper-sec3",
                "--clusters",
                "12",
                "--subjects",
                "12",
                "--reps",
                "6",
                "--seed",
                "21",
                "--estimators",
                "both",
                "--out-dir",
                dir.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    run("1", d1.path());
    run("8", d2.path());
    for artifact in ["replicate_summary.csv", "replicate_summary.json"] {
        let a = std::fs::read(d1.path().join(artifact)).unwrap();
        let b = std::fs::read(d2.path().join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between reruns");
    }
}
