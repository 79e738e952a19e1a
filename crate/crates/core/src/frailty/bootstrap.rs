//! Nonparametric cluster-bootstrap interval estimates for the correlated
//! frailty fit, plus replicate-dispersion summaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{quantile_sorted, CompetingRisksDataset};
use crate::error::{Error, Result};

use super::correlated::{fit_correlated_frailty, CorrelatedFrailtyFit};
use super::EmOptions;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: 200,
            seed: 0,
        }
    }
}

/// Percentile intervals and dispersion of the bootstrap distribution, one
/// entry per parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub parameter_names: Vec<String>,
    /// Point estimates from the full-data fit.
    pub estimates: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// 2.5th percentile of the bootstrap distribution.
    pub lower: Vec<f64>,
    /// 97.5th percentile.
    pub upper: Vec<f64>,
    /// Bias and RMSE relative to supplied truth, when available.
    pub bias: Option<Vec<f64>>,
    pub rmse: Option<Vec<f64>>,
    pub replicates_used: usize,
    pub failures: usize,
    pub warning: Option<String>,
}

/// Mean, bias, empirical SE and RMSE of a set of replicate estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub mean: f64,
    pub bias: Option<f64>,
    pub emp_se: f64,
    pub rmse: Option<f64>,
}

/// Replicate dispersion with the (R-1)-denominator empirical SE; bias and
/// RMSE are present when the truth is known.
pub fn dispersion(estimates: &[f64], truth: Option<f64>) -> Result<Dispersion> {
    if estimates.len() < 2 {
        return Err(Error::InvalidInput(
            "dispersion needs at least 2 replicate estimates".into(),
        ));
    }
    let r = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let emp_se =
        (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
    let (bias, rmse) = match truth {
        Some(t) => (
            Some(mean - t),
            Some((estimates.iter().map(|e| (e - t).powi(2)).sum::<f64>() / r).sqrt()),
        ),
        None => (None, None),
    };
    Ok(Dispersion {
        mean,
        bias,
        emp_se,
        rmse,
    })
}

fn flatten(fit: &CorrelatedFrailtyFit, names: &mut Option<Vec<String>>) -> Vec<f64> {
    let mut out = Vec::new();
    let mut n = Vec::new();
    for (cause, cox) in fit.per_cause.iter().enumerate() {
        for (c, name) in cox.covariate_names.iter().enumerate() {
            out.push(cox.beta[c]);
            n.push(format!("beta{}_{name}", cause + 1));
        }
    }
    let j = fit.params.nu.len();
    for cause in 0..j {
        out.push(fit.moments.variances[cause]);
        n.push(format!("xi_{}", cause + 1));
    }
    for j1 in 0..j {
        for j2 in (j1 + 1)..j {
            out.push(fit.moments.correlations[j1][j2]);
            n.push(format!("rho_{}{}", j1 + 1, j2 + 1));
        }
    }
    names.get_or_insert(n);
    out
}

/// Resample clusters with replacement and relabel them 1..K in draw order.
fn resample_clusters(
    data: &CompetingRisksDataset,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CompetingRisksDataset> {
    let mut by_cluster: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, r) in data.records().iter().enumerate() {
        by_cluster[r.cluster.unwrap() - 1].push(i);
    }
    let mut records = Vec::with_capacity(data.len());
    for new_label in 1..=k {
        let pick = rng.gen_range(0..k);
        for &i in &by_cluster[pick] {
            let mut r = data.records()[i].clone();
            r.cluster = Some(new_label);
            records.push(r);
        }
    }
    CompetingRisksDataset::new(
        records,
        data.num_causes(),
        data.covariate_names().to_vec(),
        Default::default(),
    )
}

/// Cluster-bootstrap percentile intervals for every parameter of the
/// correlated frailty fit (coefficients, variances, correlations).
pub fn standard_errors(
    data: &CompetingRisksDataset,
    em_options: &EmOptions,
    options: &BootstrapOptions,
    truth: Option<&[f64]>,
) -> Result<BootstrapResult> {
    if options.replicates < 2 {
        return Err(Error::InvalidInput("need at least 2 bootstrap replicates".into()));
    }
    let k = data
        .num_clusters()
        .ok_or_else(|| Error::InvalidInput("cluster labels required".into()))?;
    let inner = EmOptions {
        bootstrap_replicates: 0,
        ..em_options.clone()
    };
    let mut names = None;
    let point = flatten(&fit_correlated_frailty(data, &inner)?, &mut names);
    if let Some(t) = truth {
        if t.len() != point.len() {
            return Err(Error::InvalidInput(format!(
                "truth has {} entries for {} parameters",
                t.len(),
                point.len()
            )));
        }
    }

    let draws: Vec<std::result::Result<Vec<f64>, String>> = (0..options.replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(b + 1);
            (|| -> Result<Vec<f64>> {
                let sample = resample_clusters(data, k, &mut rng)?;
                Ok(flatten(&fit_correlated_frailty(&sample, &inner)?, &mut None))
            })()
            .map_err(|e| e.to_string())
        })
        .collect();

    let ok: Vec<&Vec<f64>> = draws.iter().filter_map(|d| d.as_ref().ok()).collect();
    let failures = draws.len() - ok.len();
    if ok.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "only {} of {} bootstrap refits succeeded",
            ok.len(),
            draws.len()
        )));
    }

    let p = point.len();
    let mut standard_errors = Vec::with_capacity(p);
    let mut lower = Vec::with_capacity(p);
    let mut upper = Vec::with_capacity(p);
    let mut bias = truth.map(|_| Vec::with_capacity(p));
    let mut rmse = truth.map(|_| Vec::with_capacity(p));
    for i in 0..p {
        let col: Vec<f64> = ok.iter().map(|d| d[i]).collect();
        let disp = dispersion(&col, truth.map(|t| t[i]))?;
        standard_errors.push(disp.emp_se);
        if let (Some(b), Some(v)) = (bias.as_mut(), disp.bias) {
            b.push(v);
        }
        if let (Some(r), Some(v)) = (rmse.as_mut(), disp.rmse) {
            r.push(v);
        }
        let mut sorted = col;
        sorted.sort_by(|a, b| a.total_cmp(b));
        lower.push(quantile_sorted(&sorted, 0.025));
        upper.push(quantile_sorted(&sorted, 0.975));
    }

    Ok(BootstrapResult {
        parameter_names: names.unwrap(),
        estimates: point,
        standard_errors,
        lower,
        upper,
        bias,
        rmse,
        replicates_used: ok.len(),
        failures,
        warning: (k < 20).then(|| {
            format!("only {k} clusters: bootstrap intervals may be unreliable below 20")
        }),
    })
}
