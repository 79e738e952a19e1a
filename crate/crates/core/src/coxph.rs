//! Cause-specific Cox proportional-hazards estimation: Breslow-tie partial
//! likelihood, Newton–Raphson with step halving, Breslow baseline hazard and
//! Wald inference. Per-subject multiplicative offsets let the frailty EM
//! reuse the fitter unchanged.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{CompetingRisksDataset, HazardModel};
use crate::error::{Error, Result};
use crate::stepfn::StepFunction;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence on the infinity norm of the gradient.
    pub grad_tolerance: f64,
    pub step_halving_limit: usize,
    /// Per-subject multiplicative offsets on the risk score; all 1 when None.
    pub offsets: Option<Vec<f64>>,
    /// |beta| beyond this bound is treated as monotone-likelihood divergence.
    pub divergence_guard: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            grad_tolerance: 1e-8,
            step_halving_limit: 20,
            offsets: None,
            divergence_guard: 15.0,
        }
    }
}

/// A fitted cause-specific Cox model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxFit {
    pub cause: usize,
    pub covariate_names: Vec<String>,
    pub beta: Vec<f64>,
    /// Inverse observed information, row-major.
    pub covariance: Vec<Vec<f64>>,
    pub standard_errors: Vec<f64>,
    pub wald_p_values: Vec<f64>,
    pub log_partial_likelihood: f64,
    pub baseline: StepFunction,
    pub iterations: usize,
    pub converged: bool,
    /// Coefficient indices that hit the divergence guard (quasi-separation).
    pub monotone_flags: Vec<usize>,
}

impl CoxFit {
    pub fn hazard_model(&self) -> HazardModel {
        HazardModel {
            beta: self.beta.clone(),
            baseline: self.baseline.clone(),
        }
    }
}

/// Survival inputs for one cause: events of other causes are censored.
struct CauseData<'a> {
    /// Subject order, descending in time.
    order: Vec<usize>,
    times: Vec<f64>,
    /// 1 when the subject fails from the target cause.
    events: Vec<bool>,
    x: &'a [Vec<f64>],
    offsets: Vec<f64>,
    p: usize,
}

impl<'a> CauseData<'a> {
    fn new(
        times: &[f64],
        statuses: &[usize],
        x: &'a [Vec<f64>],
        cause: usize,
        offsets: Option<&[f64]>,
    ) -> Result<Self> {
        let n = times.len();
        if statuses.len() != n || x.len() != n {
            return Err(Error::InvalidInput("length mismatch in survival inputs".into()));
        }
        let p = x.first().map_or(0, |r| r.len());
        if x.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInput("ragged covariate matrix".into()));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite covariate value".into()));
        }
        let offsets = match offsets {
            Some(o) => {
                if o.len() != n {
                    return Err(Error::InvalidInput("offset length mismatch".into()));
                }
                if o.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidInput("offsets must be positive and finite".into()));
                }
                o.to_vec()
            }
            None => vec![1.0; n],
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[b].partial_cmp(&times[a]).unwrap());
        Ok(Self {
            order,
            times: times.to_vec(),
            events: statuses.iter().map(|&s| s == cause).collect(),
            x,
            offsets,
            p,
        })
    }

    fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }
}

/// Log partial likelihood with gradient and Hessian, Breslow tie handling.
fn loglik_parts(data: &CauseData, beta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
    let p = data.p;
    let mut value = 0.0;
    let mut grad = DVector::<f64>::zeros(p);
    let mut hess = DMatrix::<f64>::zeros(p, p);

    // Risk-set accumulators: S0 = sum w, S1 = sum w*x, S2 = sum w*x*x'.
    let mut s0 = 0.0;
    let mut s1 = DVector::<f64>::zeros(p);
    let mut s2 = DMatrix::<f64>::zeros(p, p);

    let mut i = 0;
    let order = &data.order;
    while i < order.len() {
        let t = data.times[order[i]];
        let mut tied = 0;
        while i + tied < order.len() && data.times[order[i + tied]] == t {
            let idx = order[i + tied];
            let lp: f64 = beta.iter().zip(&data.x[idx]).map(|(b, v)| b * v).sum();
            let w = data.offsets[idx] * lp.exp();
            s0 += w;
            for a in 0..p {
                let xa = data.x[idx][a];
                s1[a] += w * xa;
                for b in 0..p {
                    s2[(a, b)] += w * xa * data.x[idx][b];
                }
            }
            tied += 1;
        }
        // events at this time, after the full tied group joined the risk set
        let mut d = 0usize;
        for k in 0..tied {
            let idx = order[i + k];
            if data.events[idx] {
                d += 1;
                let lp: f64 = beta.iter().zip(&data.x[idx]).map(|(b, v)| b * v).sum();
                value += data.offsets[idx].ln() + lp;
                for a in 0..p {
                    grad[a] += data.x[idx][a];
                }
            }
        }
        if d > 0 {
            let df = d as f64;
            value -= df * s0.ln();
            let mean = &s1 / s0;
            grad -= df * &mean;
            for a in 0..p {
                for b in 0..p {
                    hess[(a, b)] -= df * (s2[(a, b)] / s0 - mean[a] * mean[b]);
                }
            }
        }
        i += tied;
    }
    (value, grad, hess)
}

/// Value, gradient and Hessian of the cause-specific log partial likelihood.
pub fn partial_loglik(
    beta: &[f64],
    times: &[f64],
    statuses: &[usize],
    covariates: &[Vec<f64>],
    cause: usize,
    offsets: Option<&[f64]>,
) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    let data = CauseData::new(times, statuses, covariates, cause, offsets)?;
    if beta.len() != data.p {
        return Err(Error::InvalidInput("beta length mismatch".into()));
    }
    let (v, g, h) = loglik_parts(&data, beta);
    let hess = (0..data.p)
        .map(|a| (0..data.p).map(|b| h[(a, b)]).collect())
        .collect();
    Ok((v, g.iter().copied().collect(), hess))
}

fn name_collinear_columns(info: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let eig = info.clone().symmetric_eigen();
    let (mut min_i, mut min_v) = (0, f64::INFINITY);
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v < min_v {
            min_v = v;
            min_i = i;
        }
    }
    let vec = eig.eigenvectors.column(min_i);
    let max_abs = vec.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut cols: Vec<String> = vec
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > 0.3 * max_abs)
        .map(|(i, _)| {
            names
                .get(i)
                .cloned()
                .unwrap_or_else(|| format!("column {i}"))
        })
        .collect();
    if cols.is_empty() {
        cols.push("unknown".into());
    }
    cols
}

/// Breslow cumulative baseline hazard: increments d_j(t) over the offset- and
/// risk-weighted denominator at each event time.
fn breslow_from(data: &CauseData, beta: &[f64]) -> Result<StepFunction> {
    let mut s0 = 0.0;
    let mut increments: Vec<(f64, f64)> = Vec::new();
    let order = &data.order;
    let mut i = 0;
    while i < order.len() {
        let t = data.times[order[i]];
        let mut tied = 0;
        while i + tied < order.len() && data.times[order[i + tied]] == t {
            let idx = order[i + tied];
            let lp: f64 = beta.iter().zip(&data.x[idx]).map(|(b, v)| b * v).sum();
            s0 += data.offsets[idx] * lp.exp();
            tied += 1;
        }
        let d = (0..tied)
            .filter(|&k| data.events[order[i + k]])
            .count();
        if d > 0 {
            increments.push((t, d as f64 / s0));
        }
        i += tied;
    }
    increments.reverse(); // ascending time
    let mut cum = 0.0;
    let mut breakpoints = Vec::with_capacity(increments.len());
    let mut values = Vec::with_capacity(increments.len());
    for (t, inc) in increments {
        cum += inc;
        breakpoints.push(t);
        values.push(cum);
    }
    StepFunction::new(breakpoints, values, 0.0)
}

/// Breslow baseline cumulative hazard for a fitted coefficient vector.
pub fn breslow_baseline(
    beta: &[f64],
    times: &[f64],
    statuses: &[usize],
    covariates: &[Vec<f64>],
    cause: usize,
    offsets: Option<&[f64]>,
) -> Result<StepFunction> {
    let data = CauseData::new(times, statuses, covariates, cause, offsets)?;
    breslow_from(&data, beta)
}

/// Fit a cause-specific Cox model on an explicit covariate matrix.
pub fn fit_cox_matrix(
    times: &[f64],
    statuses: &[usize],
    covariates: &[Vec<f64>],
    covariate_names: &[String],
    cause: usize,
    options: &FitOptions,
) -> Result<CoxFit> {
    let data = CauseData::new(times, statuses, covariates, cause, options.offsets.as_deref())?;
    if data.n_events() == 0 {
        return Err(Error::NoEvents { cause });
    }
    let p = data.p;
    let mut beta = DVector::<f64>::zeros(p);
    let mut monotone_flags: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let (mut value, mut grad, mut hess) = loglik_parts(&data, beta.as_slice());
    trace.push(value);
    let mut iterations = 0;
    let mut converged = p == 0;

    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let info = -&hess;
        let chol = info.clone().cholesky().ok_or_else(|| Error::SingularInformation {
            columns: name_collinear_columns(&info, covariate_names),
        })?;
        let step = chol.solve(&grad);

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=options.step_halving_limit {
            let candidate = &beta + scale * &step;
            let (v, g, h) = loglik_parts(&data, candidate.as_slice());
            // relative slack: an absolute epsilon is below float resolution
            // once |loglik| is in the thousands
            if v.is_finite() && v >= value - 1e-10 * (1.0 + value.abs()) {
                beta = candidate;
                value = v;
                grad = g;
                hess = h;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        trace.push(value);
        if !accepted {
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: grad.amax(),
                trace,
            });
        }

        monotone_flags = beta
            .iter()
            .enumerate()
            .filter(|(_, b)| b.abs() > options.divergence_guard)
            .map(|(i, _)| i)
            .collect();
        if !monotone_flags.is_empty() {
            break;
        }
        if grad.amax() < options.grad_tolerance {
            converged = true;
        }
    }
    if !converged && monotone_flags.is_empty() {
        return Err(Error::NonConvergence {
            iterations,
            grad_norm: grad.amax(),
            trace,
        });
    }

    let (covariance, standard_errors) = if p > 0 {
        let info = -&hess;
        let cov = info
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::SingularInformation {
                columns: name_collinear_columns(&info, covariate_names),
            })?;
        let se: Vec<f64> = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
        let cov_rows = (0..p)
            .map(|a| (0..p).map(|b| cov[(a, b)]).collect())
            .collect();
        (cov_rows, se)
    } else {
        (Vec::new(), Vec::new())
    };

    let wald_p_values: Vec<f64> = beta
        .iter()
        .zip(&standard_errors)
        .map(|(b, se)| wald_two_sided(*b, *se))
        .collect::<Result<_>>()?;

    let baseline = breslow_from(&data, beta.as_slice())?;

    Ok(CoxFit {
        cause,
        covariate_names: covariate_names.to_vec(),
        beta: beta.iter().copied().collect(),
        covariance,
        standard_errors,
        wald_p_values,
        log_partial_likelihood: value,
        baseline,
        iterations,
        converged,
        monotone_flags,
    })
}

/// Fit a cause-specific Cox model on a dataset, selecting covariate columns
/// by index (None selects all).
pub fn fit_cox(
    data: &CompetingRisksDataset,
    cause: usize,
    covariate_selection: Option<&[usize]>,
    options: &FitOptions,
) -> Result<CoxFit> {
    let all: Vec<usize> = (0..data.covariate_names().len()).collect();
    let sel = covariate_selection.unwrap_or(&all);
    let names: Vec<String> = sel
        .iter()
        .map(|&i| data.covariate_names()[i].clone())
        .collect();
    let times: Vec<f64> = data.records().iter().map(|r| r.time).collect();
    let statuses: Vec<usize> = data.records().iter().map(|r| r.status).collect();
    let x: Vec<Vec<f64>> = data
        .records()
        .iter()
        .map(|r| sel.iter().map(|&i| r.covariates[i]).collect())
        .collect();
    fit_cox_matrix(&times, &statuses, &x, &names, cause, options)
}

/// Two-sided Wald p-value from the normal approximation.
pub fn wald_two_sided(beta: f64, se: f64) -> Result<f64> {
    if !(se > 0.0) {
        return Err(Error::InvalidInput(format!(
            "standard error must be positive, got {se}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    Ok(2.0 * (1.0 - normal.cdf((beta / se).abs())))
}

/// Wald p-value for one coefficient of a fit.
pub fn wald_pvalue(fit: &CoxFit, index: usize) -> Result<f64> {
    let se = *fit
        .standard_errors
        .get(index)
        .ok_or_else(|| Error::InvalidInput(format!("coefficient index {index} out of range")))?;
    wald_two_sided(fit.beta[index], se)
}
