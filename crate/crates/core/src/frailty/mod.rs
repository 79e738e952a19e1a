//! Shared, independent and additive-correlated gamma frailty models on
//! cause-specific hazards, estimated by EM.
//!
//! The correlated construction puts W_kj = (Z_k0 + Z_kj) / (nu0 + nu_j) on
//! the cause-j hazard of cluster k, with Z_k0 ~ Gamma(nu0, 1) shared across
//! causes and Z_kj ~ Gamma(nu_j, 1) cause-specific, so every W_kj has unit
//! mean, variance 1/(nu0 + nu_j) and cross-cause correlation
//! nu0 * sqrt(xi_j1 * xi_j2) within a cluster.

mod bootstrap;
mod correlated;
mod estep;
mod shared;

pub use bootstrap::{dispersion, standard_errors, BootstrapOptions, BootstrapResult, Dispersion};
pub use correlated::{fit_correlated_frailty, CorrelatedFrailtyFit};
pub use estep::{estep_posterior, observed_loglik, PosteriorFrailty};
pub use shared::{
    fit_independent_frailty, fit_shared_frailty, FrailtyDistribution, SharedFrailtyFit,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape parameters of the additive gamma construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrailtyParams {
    pub nu0: f64,
    /// One shape per cause.
    pub nu: Vec<f64>,
}

impl FrailtyParams {
    /// nu0 = 0 is permitted (independence limit) but every nu_j must be
    /// positive.
    pub fn validate(&self) -> Result<()> {
        if !(self.nu0 >= 0.0) || !self.nu0.is_finite() {
            return Err(Error::InvalidInput("nu0 must be finite and >= 0".into()));
        }
        if self.nu.is_empty() || self.nu.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("every nu_j must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn num_causes(&self) -> usize {
        self.nu.len()
    }
}

/// Derived frailty variances and correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrailtyMoments {
    /// xi_j = 1 / (nu0 + nu_j).
    pub variances: Vec<f64>,
    /// Full correlation matrix with unit diagonal.
    pub correlations: Vec<Vec<f64>>,
}

/// Closed-form variances and correlations of the additive construction.
pub fn frailty_moments(params: &FrailtyParams) -> Result<FrailtyMoments> {
    params.validate()?;
    let j = params.num_causes();
    let variances: Vec<f64> = params.nu.iter().map(|&nu| 1.0 / (params.nu0 + nu)).collect();
    let correlations = (0..j)
        .map(|a| {
            (0..j)
                .map(|b| {
                    if a == b {
                        1.0
                    } else {
                        params.nu0 * (variances[a] * variances[b]).sqrt()
                    }
                })
                .collect()
        })
        .collect();
    Ok(FrailtyMoments {
        variances,
        correlations,
    })
}

/// EM estimation controls shared by the frailty fitters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmOptions {
    /// Convergence on the observed-data log-likelihood change.
    pub tol: f64,
    pub max_iterations: usize,
    /// Guard on the posterior-expansion term count.
    pub expansion_bound: usize,
    /// Cluster-bootstrap replicates for interval estimates; 0 skips them.
    pub bootstrap_replicates: usize,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iterations: 500,
            expansion_bound: 1_000_000,
            bootstrap_replicates: 0,
            seed: 0,
        }
    }
}

/// Bounds for the shape search, on the log scale. The upper bound lets a
/// no-frailty solution drive the variance to ~1e-9.
pub(crate) const LOG_NU_MIN: f64 = -13.9; // ln 1e-6
pub(crate) const LOG_NU_MAX: f64 = 20.8; // ln 1e9

/// Golden-section maximization of a unimodal-ish objective on [lo, hi].
pub(crate) fn golden_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}
