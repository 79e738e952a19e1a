//! EM estimation of the additive correlated gamma frailty model on
//! cause-specific hazards.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coxph::{self, CoxFit, FitOptions};
use crate::dataset::{cluster_summaries, ClusterSummary, CompetingRisksDataset};
use crate::error::{Error, Result};
use crate::stepfn::StepFunction;

use super::estep::{estep_posterior, observed_loglik, PosteriorFrailty};
use super::{frailty_moments, golden_max, BootstrapResult, EmOptions, FrailtyMoments, FrailtyParams, LOG_NU_MAX, LOG_NU_MIN};

/// A fitted correlated frailty model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelatedFrailtyFit {
    pub per_cause: Vec<CoxFit>,
    pub params: FrailtyParams,
    pub moments: FrailtyMoments,
    /// Posterior means E[Z_k0 | data] per cluster.
    pub posterior_shared: Vec<f64>,
    /// Posterior means E[Z_kj | data], indexed [cluster][cause].
    pub posterior_specific: Vec<Vec<f64>>,
    /// Full observed-data log-likelihood per EM iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub intervals: Option<BootstrapResult>,
}

impl CorrelatedFrailtyFit {
    /// Posterior per-cause frailty means W_kj = (E[Z_k0] + E[Z_kj]) / (nu0 + nu_j).
    pub fn posterior_frailties(&self) -> Vec<Vec<f64>> {
        self.posterior_shared
            .iter()
            .zip(&self.posterior_specific)
            .map(|(&z0, zj)| {
                zj.iter()
                    .zip(&self.params.nu)
                    .map(|(&z, &nu)| (z0 + z) / (self.params.nu0 + nu))
                    .collect()
            })
            .collect()
    }
}

/// Sum over events of log baseline jump + linear predictor; the part of the
/// observed log-likelihood the frailty shapes do not touch.
pub(super) fn event_loglik_terms(data: &CompetingRisksDataset, fits: &[CoxFit]) -> f64 {
    let jumps: Vec<Vec<f64>> = fits.iter().map(|f| baseline_jumps(&f.baseline)).collect();
    let mut total = 0.0;
    for r in data.records() {
        if r.status == 0 {
            continue;
        }
        let fit = &fits[r.status - 1];
        let idx = fit
            .baseline
            .breakpoints()
            .partition_point(|&b| b < r.time);
        // Breslow attaches an increment at every event time
        debug_assert!(fit.baseline.breakpoints().get(idx) == Some(&r.time));
        let lp: f64 = fit.beta.iter().zip(&r.covariates).map(|(b, x)| b * x).sum();
        total += jumps[r.status - 1][idx].ln() + lp;
    }
    total
}

fn baseline_jumps(baseline: &StepFunction) -> Vec<f64> {
    let mut prev = 0.0;
    baseline
        .values()
        .iter()
        .map(|&v| {
            let jump = v - prev;
            prev = v;
            jump
        })
        .collect()
}

/// Coordinate ascent of the frailty-marginal log-likelihood over the shapes
/// on the log scale. Never returns parameters worse than the input.
fn maximize_shapes(
    start: &FrailtyParams,
    summaries: &[ClusterSummary],
    sweeps: usize,
) -> Result<FrailtyParams> {
    let mut params = start.clone();
    let mut best = observed_loglik(&params, summaries)?;
    for _ in 0..sweeps {
        for coord in 0..=params.nu.len() {
            let current = if coord == 0 {
                params.nu0
            } else {
                params.nu[coord - 1]
            };
            let center = current.max(1e-6).ln();
            let lo = (center - 4.0).max(LOG_NU_MIN);
            let hi = (center + 4.0).min(LOG_NU_MAX);
            let objective = |log_nu: f64| {
                let mut trial = params.clone();
                if coord == 0 {
                    trial.nu0 = log_nu.exp();
                } else {
                    trial.nu[coord - 1] = log_nu.exp();
                }
                observed_loglik(&trial, summaries).unwrap_or(f64::NEG_INFINITY)
            };
            let arg = golden_max(objective, lo, hi, 40);
            let candidate = objective(arg);
            if candidate > best {
                best = candidate;
                if coord == 0 {
                    params.nu0 = arg.exp();
                } else {
                    params.nu[coord - 1] = arg.exp();
                }
            }
        }
    }
    Ok(params)
}

/// EM loop: offset Cox refits per cause (profile M-step for coefficients and
/// baselines), direct marginal maximization for the frailty shapes, exact
/// posterior E-step.
pub fn fit_correlated_frailty(
    data: &CompetingRisksDataset,
    options: &EmOptions,
) -> Result<CorrelatedFrailtyFit> {
    let k = data
        .num_clusters()
        .ok_or_else(|| Error::InvalidInput("cluster labels required for frailty fitting".into()))?;
    if k < 2 {
        return Err(Error::Unidentifiable(
            "at least 2 clusters are required to identify frailty variances".into(),
        ));
    }
    let j = data.num_causes();
    for cause in 1..=j {
        if !data.records().iter().any(|r| r.status == cause) {
            return Err(Error::NoEvents { cause });
        }
    }

    let times: Vec<f64> = data.records().iter().map(|r| r.time).collect();
    let statuses: Vec<usize> = data.records().iter().map(|r| r.status).collect();
    let x: Vec<Vec<f64>> = data.records().iter().map(|r| r.covariates.clone()).collect();
    let names = data.covariate_names().to_vec();
    let clusters: Vec<usize> = data.records().iter().map(|r| r.cluster.unwrap() - 1).collect();

    let mut params = FrailtyParams {
        nu0: 1.0,
        nu: vec![1.0; j],
    };
    let mut offsets: Vec<Vec<f64>> = vec![vec![1.0; data.len()]; j];
    let mut trace: Vec<f64> = Vec::new();
    let mut fits: Vec<CoxFit> = Vec::new();
    let mut posts: Vec<PosteriorFrailty> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;

        fits = (0..j)
            .into_par_iter()
            .map(|cause| {
                let opts = FitOptions {
                    offsets: Some(offsets[cause].clone()),
                    ..FitOptions::default()
                };
                coxph::fit_cox_matrix(&times, &statuses, &x, &names, cause + 1, &opts)
            })
            .collect::<Result<Vec<_>>>()?;

        let models: Vec<_> = fits.iter().map(|f| f.hazard_model()).collect();
        let summaries = cluster_summaries(data, &models)?;

        params = maximize_shapes(&params, &summaries, 3)?;

        posts = summaries
            .iter()
            .map(|s| estep_posterior(s, &params, options.expansion_bound))
            .collect::<Result<Vec<_>>>()?;

        let ll = event_loglik_terms(data, &fits)
            + posts.iter().map(|p| p.log_marginal).sum::<f64>();
        let done = trace
            .last()
            .is_some_and(|&prev| (ll - prev).abs() < options.tol);
        trace.push(ll);
        if done {
            converged = true;
            break;
        }

        for (cause, col) in offsets.iter_mut().enumerate() {
            for (i, &cl) in clusters.iter().enumerate() {
                col[i] = (posts[cl].e_shared + posts[cl].e_specific[cause])
                    / (params.nu0 + params.nu[cause]);
            }
        }
    }

    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            grad_norm: f64::NAN,
            trace,
        });
    }

    let moments = frailty_moments(&params)?;
    let intervals = if options.bootstrap_replicates > 0 {
        Some(super::bootstrap::standard_errors(
            data,
            options,
            &super::BootstrapOptions {
                replicates: options.bootstrap_replicates,
                seed: options.seed,
            },
            None,
        )?)
    } else {
        None
    };

    Ok(CorrelatedFrailtyFit {
        per_cause: fits,
        params,
        moments,
        posterior_shared: posts.iter().map(|p| p.e_shared).collect(),
        posterior_specific: posts.iter().map(|p| p.e_specific.clone()).collect(),
        loglik_trace: trace,
        iterations,
        converged,
        intervals,
    })
}
