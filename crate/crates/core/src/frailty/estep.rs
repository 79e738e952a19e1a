//! Exact E-step and marginal likelihood for the additive gamma frailty
//! model.
//!
//! For a cluster with event counts d_j and hazard loads H_j, expanding
//! prod_j (Z0 + Zj)^{d_j} multinomially turns the posterior of
//! (Z0, Z1, .., ZJ) into a finite mixture of independent gammas: the
//! mixture component indexed by (m_1, .., m_J), m_j <= d_j, has
//! Z0 ~ Gamma(nu0 + sum m_j, 1 + A) and Zj ~ Gamma(nu_j + d_j - m_j,
//! 1 + c_j), with c_j = H_j / (nu0 + nu_j) and A = sum c_j. Sums over the
//! multi-index factor through one convolution per cause, so the cost is
//! quadratic in the total event count rather than the raw term count.

use statrs::function::gamma::ln_gamma;

use crate::dataset::ClusterSummary;
use crate::error::{Error, Result};

use super::FrailtyParams;

/// Posterior expectations of the latent frailty components for one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorFrailty {
    pub e_shared: f64,
    pub e_specific: Vec<f64>,
    /// Log of the cluster's marginal frailty factor: the expansion sum
    /// times prod_j (nu0 + nu_j)^(-d_j).
    pub log_marginal: f64,
}

fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-domain convolution: out[t] = logsumexp_m a[m] + b[t-m].
fn log_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; a.len() + b.len() - 1];
    for (t, slot) in out.iter_mut().enumerate() {
        let lo = t.saturating_sub(b.len() - 1);
        let hi = t.min(a.len() - 1);
        let mut max = f64::NEG_INFINITY;
        for m in lo..=hi {
            max = max.max(a[m] + b[t - m]);
        }
        if !max.is_finite() {
            continue;
        }
        let mut sum = 0.0;
        for m in lo..=hi {
            sum += (a[m] + b[t - m] - max).exp();
        }
        *slot = max + sum.ln();
    }
    out
}

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

struct Expansion {
    /// Per-cause log coefficients g_j(m_j), m_j = 0..=d_j.
    cause_terms: Vec<Vec<f64>>,
    /// Log shared-component factor phi(M), M = 0..=sum d_j.
    shared_terms: Vec<f64>,
    /// Full convolution of all cause terms.
    conv_all: Vec<f64>,
    /// logsumexp_M conv_all[M] + phi(M).
    log_sum: f64,
    c: Vec<f64>,
    a_total: f64,
}

fn expansion(summary: &ClusterSummary, params: &FrailtyParams) -> Result<Expansion> {
    let j = params.num_causes();
    if summary.event_counts.len() != j || summary.hazard_loads.len() != j {
        return Err(Error::InvalidInput(
            "cluster summary dimension does not match frailty params".into(),
        ));
    }
    if summary.hazard_loads.iter().any(|&h| h < 0.0) {
        return Err(Error::InvalidInput("hazard loads must be >= 0".into()));
    }
    let c: Vec<f64> = summary
        .hazard_loads
        .iter()
        .zip(&params.nu)
        .map(|(&h, &nu)| h / (params.nu0 + nu))
        .collect();
    let a_total: f64 = c.iter().sum();

    let cause_terms: Vec<Vec<f64>> = (0..j)
        .map(|cause| {
            let d = summary.event_counts[cause];
            let nu = params.nu[cause];
            let log1c = c[cause].ln_1p();
            (0..=d)
                .map(|m| {
                    ln_choose(d, m) + ln_gamma(nu + (d - m) as f64) - ln_gamma(nu)
                        - (nu + (d - m) as f64) * log1c
                })
                .collect()
        })
        .collect();

    let mut conv_all = vec![0.0f64];
    for terms in &cause_terms {
        conv_all = log_convolve(&conv_all, terms);
    }

    // Gamma(nu0 + M) / Gamma(nu0) stays finite as nu0 -> 0 only at M = 0;
    // treat nu0 = 0 as the pure independence term.
    let shared_terms: Vec<f64> = (0..conv_all.len())
        .map(|m| {
            if params.nu0 == 0.0 {
                if m == 0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                ln_gamma(params.nu0 + m as f64) - ln_gamma(params.nu0)
                    - (params.nu0 + m as f64) * a_total.ln_1p()
            }
        })
        .collect();

    let joint: Vec<f64> = conv_all
        .iter()
        .zip(&shared_terms)
        .map(|(a, b)| a + b)
        .collect();
    let log_sum = logsumexp(&joint);
    Ok(Expansion {
        cause_terms,
        shared_terms,
        conv_all,
        log_sum,
        c,
        a_total,
    })
}

fn check_bound(summary: &ClusterSummary, bound: usize) -> Result<()> {
    let mut terms = 1usize;
    for &d in &summary.event_counts {
        terms = terms.saturating_mul(d + 1);
    }
    if terms > bound {
        return Err(Error::ExpansionTooLarge { terms, bound });
    }
    Ok(())
}

/// Posterior means of the shared and cause-specific frailty components for
/// one cluster, by exact multinomial expansion.
pub fn estep_posterior(
    summary: &ClusterSummary,
    params: &FrailtyParams,
    expansion_bound: usize,
) -> Result<PosteriorFrailty> {
    params.validate()?;
    check_bound(summary, expansion_bound)?;
    let exp = expansion(summary, params)?;
    let j = params.num_causes();

    // E[Z0] = sum_M w(M) * (nu0 + M) / (1 + A)
    let e_shared: f64 = exp
        .conv_all
        .iter()
        .zip(&exp.shared_terms)
        .enumerate()
        .map(|(m, (cv, sh))| {
            (cv + sh - exp.log_sum).exp() * (params.nu0 + m as f64) / (1.0 + exp.a_total)
        })
        .sum();

    // E[Zj] needs the marginal over m_j: convolve the other causes, then
    // pair each m_j with every remaining total.
    let mut e_specific = Vec::with_capacity(j);
    for cause in 0..j {
        let mut conv_rest = vec![0.0f64];
        for (other, terms) in exp.cause_terms.iter().enumerate() {
            if other != cause {
                conv_rest = log_convolve(&conv_rest, terms);
            }
        }
        let d = summary.event_counts[cause];
        let mut total = 0.0;
        for (m_j, own) in exp.cause_terms[cause].iter().enumerate() {
            let post_shape = params.nu[cause] + (d - m_j) as f64;
            for (rest, rest_term) in conv_rest.iter().enumerate() {
                let w = (own + rest_term + exp.shared_terms[m_j + rest] - exp.log_sum).exp();
                total += w * post_shape / (1.0 + exp.c[cause]);
            }
        }
        e_specific.push(total);
    }

    let log_marginal = exp.log_sum
        - summary
            .event_counts
            .iter()
            .zip(&params.nu)
            .map(|(&d, &nu)| d as f64 * (params.nu0 + nu).ln())
            .sum::<f64>();

    Ok(PosteriorFrailty {
        e_shared,
        e_specific,
        log_marginal,
    })
}

/// Marginal log-likelihood contribution of the frailty structure: the sum
/// over clusters of the log expansion sum minus sum_j d_kj log(nu0 + nu_j).
/// Event-time factors (baseline jumps and linear predictors) are additive
/// constants in the frailty shapes and are not included here.
pub fn observed_loglik(params: &FrailtyParams, summaries: &[ClusterSummary]) -> Result<f64> {
    params.validate()?;
    let mut total = 0.0;
    for s in summaries {
        let exp = expansion(s, params)?;
        total += exp.log_sum;
        total -= s
            .event_counts
            .iter()
            .zip(&params.nu)
            .map(|(&d, &nu)| d as f64 * (params.nu0 + nu).ln())
            .sum::<f64>();
    }
    Ok(total)
}
