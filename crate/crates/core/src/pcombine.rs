//! P-value combination statistics and Monte-Carlo calibration of the
//! combined p-value under the joint uniform null.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// A combining statistic and the side on which small observed values count
/// as significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombinerKind {
    /// sum log p, small-significant
    Fisher,
    /// -sum log(1-p), large-significant
    Pearson,
    /// sum log(p/(1-p)), small-significant
    MudholkarGeorge,
    /// sum p, small-significant
    Edgington,
    /// min p, small-significant
    Tippett,
}

impl CombinerKind {
    /// True when smaller statistic values are more significant.
    pub fn small_significant(self) -> bool {
        !matches!(self, CombinerKind::Pearson)
    }

    fn transform(self, p: f64) -> f64 {
        match self {
            CombinerKind::Fisher => p.ln(),
            CombinerKind::Pearson => -(-p).ln_1p(),
            CombinerKind::MudholkarGeorge => (p / (1.0 - p)).ln(),
            CombinerKind::Edgington => p,
            CombinerKind::Tippett => p,
        }
    }

    /// Whether the transform is singular at the 0/1 boundary.
    fn singular_at(self, p: f64) -> bool {
        match self {
            CombinerKind::Fisher => p <= 0.0,
            CombinerKind::Pearson => p >= 1.0,
            CombinerKind::MudholkarGeorge => p <= 0.0 || p >= 1.0,
            CombinerKind::Edgington | CombinerKind::Tippett => false,
        }
    }

    fn statistic_unchecked(self, pvalues: &[f64]) -> f64 {
        match self {
            CombinerKind::Tippett => pvalues.iter().copied().fold(f64::INFINITY, f64::min),
            _ => pvalues.iter().map(|&p| self.transform(p)).sum(),
        }
    }
}

fn check_pvalues(pvalues: &[f64], kind: CombinerKind) -> Result<()> {
    if pvalues.is_empty() {
        return Err(Error::InvalidInput("no p-values supplied".into()));
    }
    for &p in pvalues {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(Error::InvalidInput(format!("p-value {p} outside [0,1]")));
        }
        if kind.singular_at(p) {
            return Err(Error::InvalidInput(format!(
                "p-value {p} is singular for {kind:?}; clamp explicitly before combining"
            )));
        }
    }
    Ok(())
}

/// Combined statistic Y0 = sum T(p_i), or min p for Tippett.
pub fn combine_statistic(pvalues: &[f64], kind: CombinerKind) -> Result<f64> {
    check_pvalues(pvalues, kind)?;
    Ok(kind.statistic_unchecked(pvalues))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    /// Number of simulated null statistics.
    pub m: usize,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            m: 100_000,
            seed: 0,
        }
    }
}

/// Result of the Monte-Carlo calibration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McPvalue {
    pub statistic: f64,
    /// (1 + hits) / (M + 1), the default decision value.
    pub p_corrected: f64,
    /// hits / M, the plain proportion.
    pub p_uncorrected: f64,
}

const MC_BLOCK: usize = 8192;

/// Monte-Carlo combined p-value: the proportion of simulated null statistics
/// on the significant side of the observed one. Replicates are drawn in
/// fixed-size blocks with per-block counter-based substreams, so the result
/// does not depend on the degree of parallelism.
pub fn monte_carlo_pvalue(
    pvalues: &[f64],
    kind: CombinerKind,
    config: &MonteCarloConfig,
) -> Result<McPvalue> {
    if config.m < 1 {
        return Err(Error::InvalidInput("M must be >= 1".into()));
    }
    let y0 = combine_statistic(pvalues, kind)?;
    let n = pvalues.len();
    let small = kind.small_significant();
    let blocks = config.m.div_ceil(MC_BLOCK);
    let hits: u64 = (0..blocks as u64)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(block + 1);
            let start = block as usize * MC_BLOCK;
            let count = MC_BLOCK.min(config.m - start);
            let mut hits = 0u64;
            let mut draw = vec![0.0f64; n];
            for _ in 0..count {
                for slot in draw.iter_mut() {
                    *slot = rng.gen::<f64>();
                }
                let y = kind.statistic_unchecked(&draw);
                let hit = if small { y <= y0 } else { y >= y0 };
                hits += u64::from(hit);
            }
            hits
        })
        .sum();
    Ok(McPvalue {
        statistic: y0,
        p_corrected: (1.0 + hits as f64) / (config.m as f64 + 1.0),
        p_uncorrected: hits as f64 / config.m as f64,
    })
}

/// Analytic Fisher combination: upper-tail chi-square probability of
/// -2 sum log p_i at 2n degrees of freedom.
pub fn fisher_analytic(pvalues: &[f64]) -> Result<f64> {
    check_pvalues(pvalues, CombinerKind::Fisher)?;
    let x: f64 = pvalues.iter().map(|&p| -2.0 * p.ln()).sum();
    // chi-square(2n) upper tail = Q(n, x/2)
    Ok(gamma_ur(pvalues.len() as f64, x / 2.0))
}

/// Analytic Tippett combination: 1 - (1 - min p)^n.
pub fn tippett_analytic(pvalues: &[f64]) -> Result<f64> {
    check_pvalues(pvalues, CombinerKind::Tippett)?;
    let min = pvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(1.0 - (1.0 - min).powi(pvalues.len() as i32))
}
