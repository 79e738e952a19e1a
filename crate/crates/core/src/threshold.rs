//! Biomarker cutpoint search: single-gene scans under p-value and
//! frailty-variance criteria, single-sweep stepwise multi-gene search over
//! orderings and quartile starts, and partition validation.

use std::collections::BTreeMap;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coxph::{self, FitOptions};
use crate::dataset::{cutoff_grid, dichotomize, quantile_sorted, CompetingRisksDataset, GridSpec};
use crate::error::{Error, Result};
use crate::frailty::{self, EmOptions, FrailtyDistribution};

/// Cutoff selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Smallest Wald p-value of the indicator in a cause-specific Cox model.
    MinP,
    /// Largest frailty variance of the cause of interest in a correlated
    /// frailty model with the indicator defining the two levels.
    MaxFrailtyVariance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanConfig {
    pub criterion: Criterion,
    /// Cause of interest (1-based).
    pub cause: usize,
    pub grid: GridSpec,
    /// Every arm must keep at least this fraction of subjects.
    pub min_arm_fraction: f64,
    pub em: EmOptions,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            criterion: Criterion::MinP,
            cause: 1,
            grid: GridSpec::Percentiles,
            min_arm_fraction: 0.10,
            em: EmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExcludedCutoff {
    pub cutoff: f64,
    pub reason: String,
}

/// One gene's scan: aligned cutoff/criterion sequences over the admissible
/// grid, plus the excluded candidates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdScanResult {
    pub gene: String,
    pub cutoffs: Vec<f64>,
    pub p_values: Vec<f64>,
    pub frailty_variances: Option<Vec<f64>>,
    pub best_by_p: usize,
    pub best_by_variance: Option<usize>,
    pub excluded: Vec<ExcludedCutoff>,
    /// Number of models actually fitted, for downstream multiplicity
    /// corrections (none is applied here).
    pub num_tests: usize,
}

impl ThresholdScanResult {
    pub fn best_cutoff(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::MinP => self.cutoffs[self.best_by_p],
            Criterion::MaxFrailtyVariance => self.cutoffs[self.best_by_variance.unwrap()],
        }
    }
}

fn gene_values<'d>(data: &'d CompetingRisksDataset, gene: &str) -> Result<&'d [f64]> {
    data.gene(gene)
        .ok_or_else(|| Error::InvalidInput(format!("gene {gene} not in dataset")))
}

/// Reject a split that leaves an arm under the minimum fraction or without
/// an event of the cause of interest.
fn admissibility(
    indicator: &[u8],
    statuses: &[usize],
    cause: usize,
    min_arm_fraction: f64,
) -> Option<String> {
    let n = indicator.len();
    let upper = indicator.iter().filter(|&&v| v == 1).count();
    let min_arm = (min_arm_fraction * n as f64).ceil() as usize;
    if upper < min_arm || n - upper < min_arm {
        return Some(format!(
            "arm sizes {}/{} below the minimum {min_arm}",
            n - upper,
            upper
        ));
    }
    let mut events = [0usize; 2];
    for (&g, &s) in indicator.iter().zip(statuses) {
        if s == cause {
            events[g as usize] += 1;
        }
    }
    if events[0] == 0 || events[1] == 0 {
        return Some(format!("no cause-{cause} event in one arm"));
    }
    None
}

/// Wald test of the indicator coefficient in a cause-specific Cox model
/// with the dataset's covariates plus the given indicator columns;
/// `which` selects the indicator being tested. Returns (p, |z|): cutoff
/// selection compares |z|, which is strictly monotone in the p-value but
/// does not underflow to 0 the way strong-effect p-values do.
fn indicator_test(
    data: &CompetingRisksDataset,
    indicators: &[Vec<f64>],
    which: usize,
    cause: usize,
) -> Result<(f64, f64)> {
    let x = data.covariate_matrix_with(indicators);
    let mut names: Vec<String> = data.covariate_names().to_vec();
    for i in 0..indicators.len() {
        names.push(format!("indicator_{}", i + 1));
    }
    let times: Vec<f64> = data.records().iter().map(|r| r.time).collect();
    let statuses: Vec<usize> = data.records().iter().map(|r| r.status).collect();
    let fit = coxph::fit_cox_matrix(&times, &statuses, &x, &names, cause, &FitOptions::default())?;
    let idx = data.covariate_names().len() + which;
    let z = (fit.beta[idx] / fit.standard_errors[idx]).abs();
    Ok((fit.wald_p_values[idx], z))
}

/// Frailty variance of the cause of interest when the indicator's two arms
/// are the frailty levels.
fn indicator_frailty_variance(
    data: &CompetingRisksDataset,
    indicator: &[u8],
    cause: usize,
    em: &EmOptions,
) -> Result<f64> {
    let clusters: Vec<usize> = indicator.iter().map(|&g| g as usize + 1).collect();
    let grouped = data.with_clusters(&clusters)?;
    let fit = frailty::fit_correlated_frailty(&grouped, em)?;
    Ok(fit.moments.variances[cause - 1])
}

/// Evaluate every admissible cutoff of one gene and pick the best under
/// both criteria (frailty variances only under MaxFrailtyVariance).
pub fn scan_single_gene(
    data: &CompetingRisksDataset,
    gene: &str,
    config: &ScanConfig,
) -> Result<ThresholdScanResult> {
    let values = gene_values(data, gene)?;
    let statuses: Vec<usize> = data.records().iter().map(|r| r.status).collect();
    let mut grid = cutoff_grid(values, config.grid)?;
    grid.dedup();

    // (p-value, |z|, frailty variance if requested) or the exclusion reason
    type CutoffOutcome = std::result::Result<(f64, f64, Option<f64>), String>;
    let evaluated: Vec<(f64, CutoffOutcome)> = grid
        .par_iter()
        .map(|&cutoff| {
            let indicator = dichotomize(values, cutoff);
            if let Some(reason) =
                admissibility(&indicator, &statuses, config.cause, config.min_arm_fraction)
            {
                return (cutoff, Err(reason));
            }
            let col: Vec<f64> = indicator.iter().map(|&g| f64::from(g)).collect();
            let outcome = (|| -> Result<(f64, f64, Option<f64>)> {
                let (p, z) = indicator_test(data, std::slice::from_ref(&col), 0, config.cause)?;
                let fvar = match config.criterion {
                    Criterion::MinP => None,
                    Criterion::MaxFrailtyVariance => Some(indicator_frailty_variance(
                        data,
                        &indicator,
                        config.cause,
                        &config.em,
                    )?),
                };
                Ok((p, z, fvar))
            })();
            (cutoff, outcome.map_err(|e| e.to_string()))
        })
        .collect();

    let mut cutoffs = Vec::new();
    let mut p_values = Vec::new();
    let mut z_values = Vec::new();
    let mut fvars = Vec::new();
    let mut excluded = Vec::new();
    for (cutoff, outcome) in evaluated {
        match outcome {
            Ok((p, z, fv)) => {
                cutoffs.push(cutoff);
                p_values.push(p);
                z_values.push(z);
                if let Some(v) = fv {
                    fvars.push(v);
                }
            }
            Err(reason) => excluded.push(ExcludedCutoff { cutoff, reason }),
        }
    }
    if cutoffs.is_empty() {
        return Err(Error::NoAdmissibleCutoff(format!(
            "gene {gene}: all {} candidates excluded",
            excluded.len()
        )));
    }

    // ties break to the smallest cutoff: strict comparison over the
    // ascending grid keeps the first optimum; |z| carries the ordering
    // where p underflows
    let best_by_p = (1..z_values.len()).fold(0, |best, i| {
        if z_values[i] > z_values[best] {
            i
        } else {
            best
        }
    });
    let best_by_variance = (!fvars.is_empty()).then(|| {
        (1..fvars.len()).fold(0, |best, i| if fvars[i] > fvars[best] { i } else { best })
    });
    let num_tests = cutoffs.len();
    Ok(ThresholdScanResult {
        gene: gene.to_string(),
        cutoffs,
        p_values,
        frailty_variances: (!fvars.is_empty()).then_some(fvars),
        best_by_p,
        best_by_variance,
        excluded,
        num_tests,
    })
}

/// Starting cutoff tag for the stepwise search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuartileStart {
    Q1,
    Q2,
    Q3,
}

impl QuartileStart {
    pub const ALL: [QuartileStart; 3] = [QuartileStart::Q1, QuartileStart::Q2, QuartileStart::Q3];

    fn quantile(self) -> f64 {
        match self {
            QuartileStart::Q1 => 0.25,
            QuartileStart::Q2 => 0.50,
            QuartileStart::Q3 => 0.75,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            QuartileStart::Q1 => "Q1",
            QuartileStart::Q2 => "Q2",
            QuartileStart::Q3 => "Q3",
        }
    }
}

/// One stepwise row: the ordering, the start tag, the selected cutoff per
/// gene (aligned with the ordering) and the joint-model p-values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepwiseResult {
    pub ordering: Vec<String>,
    pub start: QuartileStart,
    pub cutoffs: Vec<f64>,
    pub final_p_values: Vec<f64>,
}

/// Single-sweep coordinate descent: genes 1..G-1 start at the quartile
/// cutoff, gene G's grid is scanned first with all indicators in one model,
/// then G-1, ..., down to gene 1. One pass, no iteration to a fixpoint.
pub fn stepwise_multi_gene(
    data: &CompetingRisksDataset,
    genes: &[String],
    start: QuartileStart,
    config: &ScanConfig,
) -> Result<StepwiseResult> {
    if genes.is_empty() {
        return Err(Error::InvalidInput("no genes supplied".into()));
    }
    let statuses: Vec<usize> = data.records().iter().map(|r| r.status).collect();
    let values: Vec<&[f64]> = genes
        .iter()
        .map(|g| gene_values(data, g))
        .collect::<Result<_>>()?;

    let mut current: Vec<f64> = values
        .iter()
        .map(|v| {
            let mut sorted = v.to_vec();
            sorted.sort_by(|a, b| a.total_cmp(b));
            quantile_sorted(&sorted, start.quantile())
        })
        .collect();

    for g in (0..genes.len()).rev() {
        let mut grid = cutoff_grid(values[g], config.grid)?;
        grid.dedup();
        let evaluated: Vec<Option<(f64, f64)>> = grid
            .par_iter()
            .map(|&cutoff| {
                let indicator = dichotomize(values[g], cutoff);
                if admissibility(&indicator, &statuses, config.cause, config.min_arm_fraction)
                    .is_some()
                {
                    return None;
                }
                let indicators: Vec<Vec<f64>> = (0..genes.len())
                    .map(|i| {
                        let cut = if i == g { cutoff } else { current[i] };
                        dichotomize(values[i], cut).iter().map(|&b| f64::from(b)).collect()
                    })
                    .collect();
                indicator_test(data, &indicators, g, config.cause)
                    .ok()
                    .map(|(_, z)| (cutoff, z))
            })
            .collect();
        let best = evaluated
            .into_iter()
            .flatten()
            .reduce(|a, b| if b.1 > a.1 { b } else { a })
            .ok_or_else(|| {
                Error::NoAdmissibleCutoff(format!("gene {}: no admissible cutoff", genes[g]))
            })?;
        current[g] = best.0;
    }

    let indicators: Vec<Vec<f64>> = (0..genes.len())
        .map(|i| {
            dichotomize(values[i], current[i])
                .iter()
                .map(|&b| f64::from(b))
                .collect()
        })
        .collect();
    let final_p_values = (0..genes.len())
        .map(|i| indicator_test(data, &indicators, i, config.cause).map(|(p, _)| p))
        .collect::<Result<_>>()?;

    Ok(StepwiseResult {
        ordering: genes.to_vec(),
        start,
        cutoffs: current,
        final_p_values,
    })
}

/// Stepwise rows for every (permutation, start) cell plus the per-gene
/// consistency summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllOrderingsReport {
    pub rows: Vec<StepwiseResult>,
    /// Distinct selected cutoffs per gene across all rows.
    pub consistency: BTreeMap<String, Vec<f64>>,
    pub completed: usize,
    pub total: usize,
}

/// Run the stepwise search for all G! orderings crossed with the starts,
/// up to `budget` cells. Exceeding the budget returns the error; callers
/// wanting partial output should lower the budget or the gene count.
pub fn all_orderings(
    data: &CompetingRisksDataset,
    genes: &[String],
    starts: &[QuartileStart],
    config: &ScanConfig,
    budget: usize,
) -> Result<AllOrderingsReport> {
    if genes.is_empty() || starts.is_empty() {
        return Err(Error::InvalidInput("need at least one gene and one start".into()));
    }
    let cells: Vec<(Vec<String>, QuartileStart)> = genes
        .iter()
        .cloned()
        .permutations(genes.len())
        .cartesian_product(starts.iter().copied())
        .collect();
    let total = cells.len();
    if total > budget {
        return Err(Error::BudgetExceeded {
            budget,
            completed: 0,
        });
    }
    let rows: Vec<StepwiseResult> = cells
        .par_iter()
        .map(|(ordering, start)| stepwise_multi_gene(data, ordering, *start, config))
        .collect::<Result<_>>()?;

    let mut consistency: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in &rows {
        for (gene, &cut) in row.ordering.iter().zip(&row.cutoffs) {
            let entry = consistency.entry(gene.clone()).or_default();
            if !entry.contains(&cut) {
                entry.push(cut);
            }
        }
    }
    for cuts in consistency.values_mut() {
        cuts.sort_by(|a, b| a.total_cmp(b));
    }
    Ok(AllOrderingsReport {
        rows,
        consistency,
        completed: total,
        total,
    })
}

/// One arm's shared-frailty variance, or the reason it is undefined.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionCell {
    pub frailty_variance: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionValidation {
    pub gene: String,
    pub cutoff: f64,
    pub lower: PartitionCell,
    pub upper: PartitionCell,
}

fn partition_cell(
    data: &CompetingRisksDataset,
    keep: &[bool],
    distribution: FrailtyDistribution,
    em: &EmOptions,
) -> PartitionCell {
    let result = (|| -> Result<f64> {
        let part = data.subset(keep)?;
        if !part.records().iter().any(|r| r.status > 0) {
            return Err(Error::NoEvents { cause: 0 });
        }
        // per-subject grouping: inside one biomarker arm no natural cluster
        // remains, so the frailty is univariate
        let grouping: Vec<usize> = (1..=part.len()).collect();
        let fit = frailty::fit_shared_frailty(&part, distribution, Some(&grouping), em)?;
        Ok(fit.frailty_variance)
    })();
    match result {
        Ok(v) => PartitionCell {
            frailty_variance: Some(v),
            note: None,
        },
        Err(e) => PartitionCell {
            frailty_variance: None,
            note: Some(e.to_string()),
        },
    }
}

/// Split each gene at its cutoff and fit a shared-frailty PH model on both
/// arms, reporting (lower, upper) frailty variances per gene.
pub fn validate_partitions(
    data: &CompetingRisksDataset,
    cutoffs: &[(String, f64)],
    distribution: FrailtyDistribution,
    em: &EmOptions,
) -> Result<Vec<PartitionValidation>> {
    cutoffs
        .iter()
        .map(|(gene, cutoff)| {
            let values = gene_values(data, gene)?;
            let indicator = dichotomize(values, *cutoff);
            let lower_mask: Vec<bool> = indicator.iter().map(|&g| g == 0).collect();
            let upper_mask: Vec<bool> = indicator.iter().map(|&g| g == 1).collect();
            Ok(PartitionValidation {
                gene: gene.clone(),
                cutoff: *cutoff,
                lower: partition_cell(data, &lower_mask, distribution, em),
                upper: partition_cell(data, &upper_mask, distribution, em),
            })
        })
        .collect()
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation between two aligned sequences.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::InvalidInput(
            "rank correlation needs >= 3 aligned pairs".into(),
        ));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean).powi(2);
        syy += (b - mean).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined(
            "rank correlation of a constant sequence".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman correlation between a scan's p-values and frailty variances.
pub fn pvalue_variance_correlation(scan: &ThresholdScanResult) -> Result<f64> {
    let fvars = scan.frailty_variances.as_ref().ok_or_else(|| {
        Error::InvalidInput("scan carries no frailty variances; rerun under max-frailty-variance".into())
    })?;
    spearman(&scan.p_values, fvars)
}
