//! Univariate (shared) frailty proportional-hazards fits: gamma frailty by
//! EM with the closed-form E-step, log-normal frailty by penalized partial
//! likelihood with a Laplace-approximate variance profile.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::coxph::{self, CoxFit, FitOptions};
use crate::dataset::{cluster_summaries, CompetingRisksDataset};
use crate::error::{Error, Result};
use crate::stepfn::StepFunction;

use super::correlated::event_loglik_terms;
use super::{golden_max, EmOptions, LOG_NU_MAX, LOG_NU_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrailtyDistribution {
    Gamma,
    /// Normally distributed log-frailty.
    Lognormal,
}

/// A single-frailty proportional-hazards fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SharedFrailtyFit {
    /// Cause whose events were kept (0 when all causes were pooled).
    pub cause: usize,
    pub distribution: FrailtyDistribution,
    pub covariate_names: Vec<String>,
    pub beta: Vec<f64>,
    pub baseline: StepFunction,
    /// Gamma path: Var(W) = 1/nu. Log-normal path: variance of the
    /// log-frailty, the usual reporting convention for that model.
    pub frailty_variance: f64,
    /// Posterior frailty means per group (posterior modes, exponentiated,
    /// for the log-normal path).
    pub posterior_means: Vec<f64>,
    pub loglik_trace: Vec<f64>,
    /// Boundary-corrected likelihood-ratio test against the no-frailty
    /// model; gamma path only.
    pub lrt_pvalue: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Keep one cause's events (or all events when `cause` is None), censor the
/// rest, optionally replace the grouping labels.
fn collapse(
    data: &CompetingRisksDataset,
    cause: Option<usize>,
    grouping: Option<&[usize]>,
) -> Result<CompetingRisksDataset> {
    let records = data
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.status = match cause {
                Some(c) => usize::from(r.status == c),
                None => usize::from(r.status > 0),
            };
            r
        })
        .collect();
    let single = CompetingRisksDataset::new(
        records,
        1,
        data.covariate_names().to_vec(),
        BTreeMap::new(),
    )?;
    match grouping {
        Some(g) => single.with_clusters(g),
        None => Ok(single),
    }
}

fn check_groups(single: &CompetingRisksDataset, cause: usize) -> Result<usize> {
    let k = single
        .num_clusters()
        .ok_or_else(|| Error::InvalidInput("grouping labels required for frailty fitting".into()))?;
    if k < 2 {
        return Err(Error::Unidentifiable(
            "at least 2 groups are required to identify a frailty variance".into(),
        ));
    }
    if !single.records().iter().any(|r| r.status == 1) {
        return Err(Error::NoEvents { cause });
    }
    Ok(k)
}

/// Gamma frailty marginal contribution of one group:
/// nu ln nu - ln G(nu) + ln G(nu + d) - (nu + d) ln(nu + H).
fn gamma_marginal(nu: f64, d: usize, h: f64) -> f64 {
    nu * nu.ln() - ln_gamma(nu) + ln_gamma(nu + d as f64) - (nu + d as f64) * (nu + h).ln()
}

fn boundary_lrt_pvalue(ll_frailty: f64, ll_null: f64) -> f64 {
    let lrt = (2.0 * (ll_frailty - ll_null)).max(0.0);
    if lrt == 0.0 {
        // half the null mass sits exactly on the boundary
        return 1.0;
    }
    0.5 * gamma_ur(0.5, lrt / 2.0)
}

fn fit_gamma(
    single: &CompetingRisksDataset,
    cause: usize,
    options: &EmOptions,
) -> Result<SharedFrailtyFit> {
    check_groups(single, cause.max(1))?;
    let times: Vec<f64> = single.records().iter().map(|r| r.time).collect();
    let statuses: Vec<usize> = single.records().iter().map(|r| r.status).collect();
    let x: Vec<Vec<f64>> = single.records().iter().map(|r| r.covariates.clone()).collect();
    let names = single.covariate_names().to_vec();
    let groups: Vec<usize> = single.records().iter().map(|r| r.cluster.unwrap() - 1).collect();

    let mut nu: f64 = 1.0;
    let mut offsets = vec![1.0; single.len()];
    let mut trace: Vec<f64> = Vec::new();
    let mut fit: Option<CoxFit> = None;
    let mut posterior: Vec<f64> = Vec::new();
    let mut ll_null = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let opts = FitOptions {
            offsets: Some(offsets.clone()),
            ..FitOptions::default()
        };
        let cox = coxph::fit_cox_matrix(&times, &statuses, &x, &names, 1, &opts)?;
        let summaries = cluster_summaries(single, &[cox.hazard_model()])?;
        let events = event_loglik_terms(single, std::slice::from_ref(&cox));
        if iterations == 1 {
            // offsets are all 1 on the first pass: a plain Cox fit, whose
            // full likelihood anchors the no-frailty LRT
            ll_null = events - summaries.iter().map(|s| s.hazard_loads[0]).sum::<f64>();
        }

        let marginal = |log_nu: f64| {
            let v = log_nu.exp();
            summaries
                .iter()
                .map(|s| gamma_marginal(v, s.event_counts[0], s.hazard_loads[0]))
                .sum::<f64>()
        };
        let arg = golden_max(marginal, LOG_NU_MIN, LOG_NU_MAX, 60);
        if marginal(arg) > marginal(nu.ln()) {
            nu = arg.exp();
        }

        let ll = events + marginal(nu.ln());
        let done = trace
            .last()
            .is_some_and(|&prev| (ll - prev).abs() < options.tol);
        trace.push(ll);

        posterior = summaries
            .iter()
            .map(|s| (nu + s.event_counts[0] as f64) / (nu + s.hazard_loads[0]))
            .collect();
        fit = Some(cox);
        if done {
            converged = true;
            break;
        }
        for (i, &g) in groups.iter().enumerate() {
            offsets[i] = posterior[g];
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            grad_norm: f64::NAN,
            trace,
        });
    }
    let cox = fit.unwrap();
    let lrt = boundary_lrt_pvalue(*trace.last().unwrap(), ll_null);
    Ok(SharedFrailtyFit {
        cause,
        distribution: FrailtyDistribution::Gamma,
        covariate_names: cox.covariate_names.clone(),
        beta: cox.beta.clone(),
        baseline: cox.baseline.clone(),
        frailty_variance: 1.0 / nu,
        posterior_means: posterior,
        loglik_trace: trace,
        lrt_pvalue: Some(lrt),
        iterations,
        converged,
    })
}

/// One penalized fit at fixed log-frailty variance theta. Returns the
/// Laplace-approximate marginal log-likelihood alongside the fit pieces.
fn lognormal_inner(
    single: &CompetingRisksDataset,
    theta: f64,
    options: &EmOptions,
) -> Result<(f64, CoxFit, Vec<f64>, usize)> {
    let times: Vec<f64> = single.records().iter().map(|r| r.time).collect();
    let statuses: Vec<usize> = single.records().iter().map(|r| r.status).collect();
    let x: Vec<Vec<f64>> = single.records().iter().map(|r| r.covariates.clone()).collect();
    let names = single.covariate_names().to_vec();
    let groups: Vec<usize> = single.records().iter().map(|r| r.cluster.unwrap() - 1).collect();
    let k = single.num_clusters().unwrap();

    let mut b = vec![0.0f64; k];
    let mut last_ll = f64::NEG_INFINITY;
    let mut result = None;
    for pass in 0..50 {
        let offsets: Vec<f64> = groups.iter().map(|&g| b[g].exp()).collect();
        // the alternation only needs a loose inner tolerance; extreme
        // offsets can leave the gradient stuck above the default 1e-8
        let opts = FitOptions {
            offsets: Some(offsets),
            grad_tolerance: 1e-4,
            ..FitOptions::default()
        };
        let cox = coxph::fit_cox_matrix(&times, &statuses, &x, &names, 1, &opts)?;
        let summaries = cluster_summaries(single, &[cox.hazard_model()])?;

        // per-group Newton on d*b - H*e^b - b^2/(2 theta), strictly concave
        for (bg, s) in b.iter_mut().zip(&summaries) {
            let (d, h) = (s.event_counts[0] as f64, s.hazard_loads[0]);
            for _ in 0..50 {
                let grad = d - h * bg.exp() - *bg / theta;
                let hess = -h * bg.exp() - 1.0 / theta;
                let step = grad / hess;
                *bg -= step;
                if step.abs() < 1e-12 {
                    break;
                }
            }
        }

        let mut ll = event_loglik_terms(single, std::slice::from_ref(&cox));
        for (bg, s) in b.iter().zip(&summaries) {
            let (d, h) = (s.event_counts[0] as f64, s.hazard_loads[0]);
            ll += d * bg - h * bg.exp() - bg * bg / (2.0 * theta)
                - 0.5 * (1.0 + theta * h * bg.exp()).ln();
        }
        let done = (ll - last_ll).abs() < options.tol.max(1e-8) * (1.0 + ll.abs());
        last_ll = ll;
        result = Some((ll, cox, b.clone(), pass + 1));
        if done {
            break;
        }
    }
    Ok(result.unwrap())
}

fn fit_lognormal(
    single: &CompetingRisksDataset,
    cause: usize,
    options: &EmOptions,
) -> Result<SharedFrailtyFit> {
    check_groups(single, cause.max(1))?;
    let profile = |log_theta: f64| {
        lognormal_inner(single, log_theta.exp(), options)
            .map(|(ll, ..)| ll)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let log_theta = golden_max(profile, (1e-6f64).ln(), (20.0f64).ln(), 30);
    let theta = log_theta.exp();
    let (ll, cox, b, passes) = lognormal_inner(single, theta, options)?;
    Ok(SharedFrailtyFit {
        cause,
        distribution: FrailtyDistribution::Lognormal,
        covariate_names: cox.covariate_names.clone(),
        beta: cox.beta.clone(),
        baseline: cox.baseline.clone(),
        frailty_variance: theta,
        posterior_means: b.iter().map(|v| v.exp()).collect(),
        loglik_trace: vec![ll],
        lrt_pvalue: None,
        iterations: passes,
        converged: true,
    })
}

/// Shared-frailty PH fit on all-cause survival. `grouping` (1-based labels,
/// one per record) overrides the dataset's cluster labels.
pub fn fit_shared_frailty(
    data: &CompetingRisksDataset,
    distribution: FrailtyDistribution,
    grouping: Option<&[usize]>,
    options: &EmOptions,
) -> Result<SharedFrailtyFit> {
    let single = collapse(data, None, grouping)?;
    match distribution {
        FrailtyDistribution::Gamma => fit_gamma(&single, 0, options),
        FrailtyDistribution::Lognormal => fit_lognormal(&single, 0, options),
    }
}

/// Independent gamma frailty: one shared-frailty fit per cause, censoring
/// the competing causes.
pub fn fit_independent_frailty(
    data: &CompetingRisksDataset,
    options: &EmOptions,
) -> Result<Vec<SharedFrailtyFit>> {
    (1..=data.num_causes())
        .map(|cause| {
            let single = collapse(data, Some(cause), None)?;
            fit_gamma(&single, cause, options)
        })
        .collect()
}
