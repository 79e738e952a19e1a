//! Data model, CSV ingestion, gene dichotomization and nonparametric
//! competing-risks summaries.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stepfn::StepFunction;

/// One subject: observed time, event status (0 = censored, j = cause of
/// failure), covariates, optional cluster (biomarker level) label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub id: String,
    pub time: f64,
    pub status: usize,
    pub covariates: Vec<f64>,
    pub cluster: Option<usize>,
}

/// A competing-risks dataset: subjects, number of causes, covariate labels,
/// and gene expression columns aligned with the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetingRisksDataset {
    records: Vec<SurvivalRecord>,
    num_causes: usize,
    covariate_names: Vec<String>,
    genes: BTreeMap<String, Vec<f64>>,
}

impl CompetingRisksDataset {
    pub fn new(
        records: Vec<SurvivalRecord>,
        num_causes: usize,
        covariate_names: Vec<String>,
        genes: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self> {
        if num_causes < 1 {
            return Err(Error::InvalidInput("num_causes must be >= 1".into()));
        }
        let p = covariate_names.len();
        let mut bad_rows = Vec::new();
        for (i, r) in records.iter().enumerate() {
            if !(r.time > 0.0) || !r.time.is_finite() {
                bad_rows.push(format!("row {}: time {} must be positive", i + 1, r.time));
            }
            if r.status > num_causes {
                bad_rows.push(format!(
                    "row {}: status {} outside 0..={}",
                    i + 1,
                    r.status,
                    num_causes
                ));
            }
            if r.covariates.len() != p {
                bad_rows.push(format!(
                    "row {}: {} covariates, expected {}",
                    i + 1,
                    r.covariates.len(),
                    p
                ));
            }
            if r.covariates.iter().any(|x| !x.is_finite()) {
                bad_rows.push(format!("row {}: non-finite covariate", i + 1));
            }
        }
        if !bad_rows.is_empty() {
            return Err(Error::RowValidation(bad_rows.join("; ")));
        }
        for (g, vals) in &genes {
            if vals.len() != records.len() {
                return Err(Error::InvalidInput(format!(
                    "gene {g} has {} values for {} records",
                    vals.len(),
                    records.len()
                )));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "gene {g} contains missing or non-finite values"
                )));
            }
        }
        let ds = Self {
            records,
            num_causes,
            covariate_names,
            genes,
        };
        ds.check_cluster_labels()?;
        Ok(ds)
    }

    fn check_cluster_labels(&self) -> Result<()> {
        let labels: Vec<usize> = self.records.iter().filter_map(|r| r.cluster).collect();
        if labels.is_empty() {
            return Ok(());
        }
        if labels.len() != self.records.len() {
            return Err(Error::InvalidInput(
                "cluster labels must be present on all records or none".into(),
            ));
        }
        let mut distinct: Vec<usize> = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let k = distinct.len();
        if distinct.first() != Some(&1) || distinct.last() != Some(&k) {
            return Err(Error::InvalidInput(format!(
                "cluster labels must form a contiguous set 1..{k}, got {distinct:?}"
            )));
        }
        Ok(())
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_causes(&self) -> usize {
        self.num_causes
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn gene_names(&self) -> impl Iterator<Item = &str> {
        self.genes.keys().map(|s| s.as_str())
    }

    pub fn gene(&self, name: &str) -> Option<&[f64]> {
        self.genes.get(name).map(|v| v.as_slice())
    }

    /// Number of clusters, if cluster labels are present.
    pub fn num_clusters(&self) -> Option<usize> {
        self.records
            .iter()
            .map(|r| r.cluster)
            .collect::<Option<Vec<_>>>()
            .map(|v| v.into_iter().max().unwrap_or(0))
    }

    /// Copy of the dataset with the cluster column replaced.
    pub fn with_clusters(&self, clusters: &[usize]) -> Result<Self> {
        if clusters.len() != self.records.len() {
            return Err(Error::InvalidInput(
                "cluster vector length must match record count".into(),
            ));
        }
        let mut ds = self.clone();
        for (r, &c) in ds.records.iter_mut().zip(clusters) {
            r.cluster = Some(c);
        }
        ds.check_cluster_labels()?;
        Ok(ds)
    }

    /// Copy of the dataset restricted to the records selected by `keep`.
    pub fn subset(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.records.len() {
            return Err(Error::InvalidInput("mask length mismatch".into()));
        }
        let records = self
            .records
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(r, _)| r.clone())
            .collect();
        let genes = self
            .genes
            .iter()
            .map(|(g, v)| {
                let vals = v
                    .iter()
                    .zip(keep)
                    .filter(|(_, &k)| k)
                    .map(|(x, _)| *x)
                    .collect();
                (g.clone(), vals)
            })
            .collect();
        Self::new(
            records,
            self.num_causes,
            self.covariate_names.clone(),
            genes,
        )
    }

    /// Covariate matrix augmented with extra columns (e.g. gene indicators).
    pub fn covariate_matrix_with(&self, extra: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut row = r.covariates.clone();
                for col in extra {
                    row.push(col[i]);
                }
                row
            })
            .collect()
    }
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub id_col: Option<String>,
    pub time_col: String,
    pub status_col: String,
    pub covariate_cols: Vec<String>,
    pub gene_cols: Vec<String>,
    pub cluster_col: Option<String>,
    /// Declared number of causes; inferred from the data when absent.
    pub num_causes: Option<usize>,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
}

fn parse_f64(field: &str, row: usize, col: &str, errors: &mut Vec<String>) -> f64 {
    match field.trim().parse::<f64>() {
        Ok(v) => v,
        Err(_) => {
            errors.push(format!("row {row}: non-numeric value '{field}' in column '{col}'"));
            f64::NAN
        }
    }
}

/// Load a competing-risks dataset from a headered CSV file.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<CompetingRisksDataset> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();

    let id_idx = schema
        .id_col
        .as_deref()
        .map(|c| column_index(&headers, c))
        .transpose()?;
    let time_idx = column_index(&headers, &schema.time_col)?;
    let status_idx = column_index(&headers, &schema.status_col)?;
    let cov_idx: Vec<usize> = schema
        .covariate_cols
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<_>>()?;
    let gene_idx: Vec<usize> = schema
        .gene_cols
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<_>>()?;
    let cluster_idx = schema
        .cluster_col
        .as_deref()
        .map(|c| column_index(&headers, c))
        .transpose()?;

    let mut records = Vec::new();
    let mut genes: BTreeMap<String, Vec<f64>> = schema
        .gene_cols
        .iter()
        .map(|g| (g.clone(), Vec::new()))
        .collect();
    let mut errors = Vec::new();

    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let time = parse_f64(&rec[time_idx], row, &schema.time_col, &mut errors);
        let status_raw = parse_f64(&rec[status_idx], row, &schema.status_col, &mut errors);
        let status = if status_raw.is_finite() && status_raw >= 0.0 && status_raw.fract() == 0.0 {
            status_raw as usize
        } else {
            if status_raw.is_finite() {
                errors.push(format!(
                    "row {row}: status {status_raw} is not a non-negative integer"
                ));
            }
            0
        };
        let covariates: Vec<f64> = cov_idx
            .iter()
            .zip(&schema.covariate_cols)
            .map(|(&j, c)| parse_f64(&rec[j], row, c, &mut errors))
            .collect();
        for (&j, g) in gene_idx.iter().zip(&schema.gene_cols) {
            let v = parse_f64(&rec[j], row, g, &mut errors);
            genes.get_mut(g).unwrap().push(v);
        }
        let cluster = cluster_idx.map(|j| {
            let v = parse_f64(&rec[j], row, schema.cluster_col.as_deref().unwrap(), &mut errors);
            if v.is_finite() && v >= 1.0 && v.fract() == 0.0 {
                v as usize
            } else {
                if v.is_finite() {
                    errors.push(format!("row {row}: cluster label {v} is not a positive integer"));
                }
                1
            }
        });
        let id = id_idx
            .map(|j| rec[j].to_string())
            .unwrap_or_else(|| row.to_string());
        records.push(SurvivalRecord {
            id,
            time,
            status,
            covariates,
            cluster,
        });
    }
    if !errors.is_empty() {
        return Err(Error::RowValidation(errors.join("; ")));
    }

    let max_status = records.iter().map(|r| r.status).max().unwrap_or(0);
    let num_causes = match schema.num_causes {
        Some(j) => {
            if max_status > j {
                return Err(Error::RowValidation(format!(
                    "status column contains {max_status} but declared number of causes is {j}"
                )));
            }
            j
        }
        None => max_status.max(1),
    };

    // Row-level validity (time > 0, cluster contiguity) is re-checked here.
    CompetingRisksDataset::new(records, num_causes, schema.covariate_cols.clone(), genes)
}

/// Write the dataset back out in the same CSV schema used by `load_csv`.
pub fn save_csv(data: &CompetingRisksDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let gene_names: Vec<String> = data.gene_names().map(String::from).collect();
    let has_cluster = data.records().iter().all(|r| r.cluster.is_some());

    let mut header = vec!["id".to_string(), "time".to_string(), "status".to_string()];
    header.extend(data.covariate_names().iter().cloned());
    header.extend(gene_names.iter().cloned());
    if has_cluster {
        header.push("cluster".to_string());
    }
    w.write_record(&header)?;

    for (i, r) in data.records().iter().enumerate() {
        let mut row = vec![r.id.clone(), format!("{}", r.time), r.status.to_string()];
        for x in &r.covariates {
            row.push(format!("{x}"));
        }
        for g in &gene_names {
            row.push(format!("{}", data.gene(g).unwrap()[i]));
        }
        if has_cluster {
            row.push(r.cluster.unwrap().to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Binary split of expression values at a cutoff: 0 below, 1 at or above.
pub fn dichotomize(values: &[f64], cutoff: f64) -> Vec<u8> {
    values.iter().map(|&v| u8::from(v >= cutoff)).collect()
}

/// Candidate cutoff grid specification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum GridSpec {
    /// The 1st..99th empirical percentiles (linear interpolation between
    /// order statistics).
    #[default]
    Percentiles,
    /// `points` interior points equally spaced over [min, max].
    EqualSpacing { points: usize },
}

/// Empirical quantile with linear interpolation between order statistics
/// ("type 7"). `q` in [0, 1]; `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Candidate cutoffs for dichotomization.
pub fn cutoff_grid(values: &[f64], grid: GridSpec) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::InvalidInput(
            "cutoff grid needs at least 2 values".into(),
        ));
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    if min == max {
        return Err(Error::InvalidInput(
            "all values identical: no valid partition".into(),
        ));
    }
    match grid {
        GridSpec::Percentiles => Ok((1..=99)
            .map(|p| quantile_sorted(&sorted, p as f64 / 100.0))
            .collect()),
        GridSpec::EqualSpacing { points } => {
            if points == 0 {
                return Err(Error::InvalidInput("equal-spacing grid needs >= 1 point".into()));
            }
            let step = (max - min) / (points as f64 + 1.0);
            Ok((1..=points).map(|i| min + i as f64 * step).collect())
        }
    }
}

/// Aalen–Johansen cumulative incidence for one cause:
/// CIF_j(t) = sum over event times t_i <= t of S(t_i-) * d_ij / n_i,
/// with S the all-cause Kaplan–Meier estimate.
pub fn cumulative_incidence(data: &CompetingRisksDataset, cause: usize) -> Result<StepFunction> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cause < 1 || cause > data.num_causes() {
        return Err(Error::InvalidInput(format!(
            "cause {cause} outside 1..={}",
            data.num_causes()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| {
        data.records()[a]
            .time
            .partial_cmp(&data.records()[b].time)
            .unwrap()
    });

    let n = data.len();
    let mut surv_prev = 1.0; // all-cause KM just before the current time
    let mut cif = 0.0;
    let mut breakpoints = Vec::new();
    let mut values = Vec::new();

    let mut i = 0;
    let mut at_risk = n;
    while i < order.len() {
        let t = data.records()[order[i]].time;
        let mut d_all = 0usize;
        let mut d_cause = 0usize;
        let mut tied = 0usize;
        while i + tied < order.len() && data.records()[order[i + tied]].time == t {
            let s = data.records()[order[i + tied]].status;
            if s > 0 {
                d_all += 1;
                if s == cause {
                    d_cause += 1;
                }
            }
            tied += 1;
        }
        if d_cause > 0 {
            cif += surv_prev * d_cause as f64 / at_risk as f64;
            breakpoints.push(t);
            values.push(cif);
        }
        if d_all > 0 {
            surv_prev *= 1.0 - d_all as f64 / at_risk as f64;
        }
        at_risk -= tied;
        i += tied;
    }
    StepFunction::new(breakpoints, values, 0.0)
}

/// All-cause Kaplan–Meier survival curve.
pub fn kaplan_meier(data: &CompetingRisksDataset) -> Result<StepFunction> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| {
        data.records()[a]
            .time
            .partial_cmp(&data.records()[b].time)
            .unwrap()
    });
    let mut surv = 1.0;
    let mut breakpoints = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    let mut at_risk = data.len();
    while i < order.len() {
        let t = data.records()[order[i]].time;
        let mut d = 0usize;
        let mut tied = 0usize;
        while i + tied < order.len() && data.records()[order[i + tied]].time == t {
            if data.records()[order[i + tied]].status > 0 {
                d += 1;
            }
            tied += 1;
        }
        if d > 0 {
            surv *= 1.0 - d as f64 / at_risk as f64;
            breakpoints.push(t);
            values.push(surv);
        }
        at_risk -= tied;
        i += tied;
    }
    StepFunction::new(breakpoints, values, 1.0)
}

/// Per-cause coefficients and baseline cumulative hazard, the pieces of a
/// fitted cause-specific hazard needed to accumulate cluster loads.
#[derive(Debug, Clone)]
pub struct HazardModel {
    pub beta: Vec<f64>,
    pub baseline: StepFunction,
}

/// Per-cluster event counts, subject count and accumulated hazard loads
/// H_kj = sum_i Lambda_j0(t_ki) * exp(beta_j' x_ki).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub n_subjects: usize,
    /// d_kj, indexed by cause - 1.
    pub event_counts: Vec<usize>,
    /// H_kj, indexed by cause - 1.
    pub hazard_loads: Vec<f64>,
}

/// Accumulate per-cluster summaries from fitted per-cause hazards.
pub fn cluster_summaries(
    data: &CompetingRisksDataset,
    fits: &[HazardModel],
) -> Result<Vec<ClusterSummary>> {
    if fits.len() != data.num_causes() {
        return Err(Error::InvalidInput(format!(
            "{} hazard models supplied for {} causes",
            fits.len(),
            data.num_causes()
        )));
    }
    let k = data.num_clusters().ok_or_else(|| {
        Error::InvalidInput("cluster labels missing on one or more records".into())
    })?;
    let j = data.num_causes();
    let mut out: Vec<ClusterSummary> = (1..=k)
        .map(|c| ClusterSummary {
            cluster: c,
            n_subjects: 0,
            event_counts: vec![0; j],
            hazard_loads: vec![0.0; j],
        })
        .collect();
    for r in data.records() {
        let s = &mut out[r.cluster.unwrap() - 1];
        s.n_subjects += 1;
        if r.status > 0 {
            s.event_counts[r.status - 1] += 1;
        }
        for (cause, fit) in fits.iter().enumerate() {
            let lp: f64 = fit
                .beta
                .iter()
                .zip(&r.covariates)
                .map(|(b, x)| b * x)
                .sum();
            s.hazard_loads[cause] += fit.baseline.eval(r.time) * lp.exp();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::io::Write;

    fn record(time: f64, status: usize) -> SurvivalRecord {
        SurvivalRecord {
            id: String::new(),
            time,
            status,
            covariates: vec![],
            cluster: None,
        }
    }

    fn dataset(spec: &[(f64, usize)], num_causes: usize) -> CompetingRisksDataset {
        CompetingRisksDataset::new(
            spec.iter().map(|&(t, s)| record(t, s)).collect(),
            num_causes,
            vec![],
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn load_csv_three_rows() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "t,s\n1,1\n2,2\n3,0").unwrap();
        let schema = CsvSchema {
            id_col: None,
            time_col: "t".into(),
            status_col: "s".into(),
            covariate_cols: vec![],
            gene_cols: vec![],
            cluster_col: None,
            num_causes: None,
        };
        let ds = load_csv(f.path(), &schema).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.num_causes(), 2);
    }

    #[test]
    fn load_csv_negative_time_names_row() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "t,s\n1,1\n-2,0").unwrap();
        let schema = CsvSchema {
            id_col: None,
            time_col: "t".into(),
            status_col: "s".into(),
            covariate_cols: vec![],
            gene_cols: vec![],
            cluster_col: None,
            num_causes: None,
        };
        let err = load_csv(f.path(), &schema).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn load_csv_status_above_declared_j() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "t,s\n1,3\n2,0").unwrap();
        let schema = CsvSchema {
            id_col: None,
            time_col: "t".into(),
            status_col: "s".into(),
            covariate_cols: vec![],
            gene_cols: vec![],
            cluster_col: None,
            num_causes: Some(2),
        };
        assert!(load_csv(f.path(), &schema).is_err());
    }

    #[test]
    fn load_csv_missing_column_is_schema_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "t,s\n1,1").unwrap();
        let schema = CsvSchema {
            id_col: None,
            time_col: "time".into(),
            status_col: "s".into(),
            covariate_cols: vec![],
            gene_cols: vec![],
            cluster_col: None,
            num_causes: None,
        };
        assert!(matches!(
            load_csv(f.path(), &schema),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "id,time,status,age,G1\na,1.5,1,42.25,3.125\nb,2,0,10.5,-1.75").unwrap();
        let schema = CsvSchema {
            id_col: Some("id".into()),
            time_col: "time".into(),
            status_col: "status".into(),
            covariate_cols: vec!["age".into()],
            gene_cols: vec!["G1".into()],
            cluster_col: None,
            num_causes: None,
        };
        let ds = load_csv(f.path(), &schema).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_csv(&ds, out.path()).unwrap();
        let ds2 = load_csv(out.path(), &schema).unwrap();
        assert_eq!(ds, ds2);
    }

    #[test]
    fn dichotomize_examples() {
        assert_eq!(dichotomize(&[5.0, 9.0], 8.5), vec![0, 1]);
        assert_eq!(dichotomize(&[8.5], 8.5), vec![1]); // ties go up
        assert_eq!(dichotomize(&[3.0, 5.0, 4.0], 3.0), vec![1, 1, 1]);
    }

    // Independent percentile oracle: sort and interpolate directly.
    fn percentile_oracle(values: &[f64], p: usize) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (v.len() as f64 - 1.0) * p as f64 / 100.0;
        let lo = h.floor() as usize;
        v[lo] + (h - lo as f64) * (v[(lo + 1).min(v.len() - 1)] - v[lo])
    }

    #[test]
    fn percentile_grid_matches_oracle() {
        let values: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let grid = cutoff_grid(&values, GridSpec::Percentiles).unwrap();
        assert_eq!(grid.len(), 99);
        for (i, &c) in grid.iter().enumerate() {
            assert_abs_diff_eq!(c, percentile_oracle(&values, i + 1), epsilon = 1e-12);
        }
        // frozen endpoints of the type-7 interpolation on 1..100
        assert_abs_diff_eq!(grid[0], 1.99, epsilon = 1e-12);
        assert_abs_diff_eq!(grid[98], 99.01, epsilon = 1e-12);
    }

    #[test]
    fn equal_spacing_grid() {
        let grid = cutoff_grid(&[0.0, 10.0], GridSpec::EqualSpacing { points: 99 }).unwrap();
        assert_eq!(grid.len(), 99);
        assert_abs_diff_eq!(grid[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(grid[98], 9.9, epsilon = 1e-12);
    }

    #[test]
    fn constant_values_have_no_grid() {
        assert!(cutoff_grid(&[2.0, 2.0, 2.0], GridSpec::Percentiles).is_err());
    }

    #[test]
    fn cif_hand_checked() {
        let ds = dataset(&[(1.0, 1), (2.0, 2), (3.0, 0)], 2);
        let cif1 = cumulative_incidence(&ds, 1).unwrap();
        let cif2 = cumulative_incidence(&ds, 2).unwrap();
        assert_abs_diff_eq!(cif1.eval(1.0), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cif2.eval(2.0), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(cif2.eval(1.9), 0.0);
    }

    #[test]
    fn cif_no_events_of_cause() {
        let ds = dataset(&[(1.0, 1), (2.0, 0)], 2);
        let cif2 = cumulative_incidence(&ds, 2).unwrap();
        assert!(cif2.is_empty());
        assert_eq!(cif2.eval(10.0), 0.0);
    }

    #[test]
    fn cif_single_subject() {
        let ds = dataset(&[(4.0, 1)], 1);
        let cif = cumulative_incidence(&ds, 1).unwrap();
        assert_abs_diff_eq!(cif.eval(4.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cif_plus_survival_is_one() {
        // all-cause decomposition at every event time
        let ds = dataset(
            &[
                (1.0, 1),
                (1.5, 2),
                (2.0, 0),
                (2.5, 1),
                (3.0, 2),
                (3.5, 1),
                (4.0, 0),
            ],
            2,
        );
        let cif1 = cumulative_incidence(&ds, 1).unwrap();
        let cif2 = cumulative_incidence(&ds, 2).unwrap();
        let km = kaplan_meier(&ds).unwrap();
        for r in ds.records() {
            if r.status > 0 {
                let total = cif1.eval(r.time) + cif2.eval(r.time) + km.eval(r.time);
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cluster_summaries_counts_and_loads() {
        let mut records = vec![
            SurvivalRecord {
                id: "1".into(),
                time: 2.0,
                status: 1,
                covariates: vec![],
                cluster: Some(1),
            },
            SurvivalRecord {
                id: "2".into(),
                time: 3.0,
                status: 0,
                covariates: vec![],
                cluster: Some(1),
            },
            SurvivalRecord {
                id: "3".into(),
                time: 1.0,
                status: 0,
                covariates: vec![],
                cluster: Some(2),
            },
        ];
        records[0].cluster = Some(1);
        let ds = CompetingRisksDataset::new(records, 1, vec![], BTreeMap::new()).unwrap();
        // beta = 0, Lambda0(t) = t: H_k = sum of times
        let ident = HazardModel {
            beta: vec![],
            baseline: StepFunction::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], 0.0).unwrap(),
        };
        let sums = cluster_summaries(&ds, &[ident]).unwrap();
        assert_eq!(sums.len(), 2);
        assert_eq!(sums[0].event_counts, vec![1]);
        assert_eq!(sums[0].n_subjects, 2);
        assert_abs_diff_eq!(sums[0].hazard_loads[0], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sums[1].hazard_loads[0], 1.0, epsilon = 1e-12);
        // partition property
        let n: usize = sums.iter().map(|s| s.n_subjects).sum();
        assert_eq!(n, ds.len());
    }

    proptest! {
        #[test]
        fn dichotomize_monotone_in_cutoff(
            values in proptest::collection::vec(-100.0..100.0f64, 1..50),
            c1 in -100.0..100.0f64,
            delta in 0.0..50.0f64,
        ) {
            let lo = dichotomize(&values, c1);
            let hi = dichotomize(&values, c1 + delta);
            for (a, b) in lo.iter().zip(&hi) {
                prop_assert!(a >= b, "raising the cutoff flipped a 0 to a 1");
            }
        }

        #[test]
        fn dichotomize_counts_match_scan(
            values in proptest::collection::vec(-100.0..100.0f64, 1..50),
            cutoff in -100.0..100.0f64,
        ) {
            let ones = dichotomize(&values, cutoff).iter().filter(|&&z| z == 1).count();
            let brute = values.iter().filter(|&&v| v >= cutoff).count();
            prop_assert_eq!(ones, brute);
        }

        #[test]
        fn cif_decomposition_property(
            spec in proptest::collection::vec((0.1..50.0f64, 0usize..3), 1..30)
        ) {
            let ds = dataset(&spec, 2);
            let cif1 = cumulative_incidence(&ds, 1).unwrap();
            let cif2 = cumulative_incidence(&ds, 2).unwrap();
            let km = kaplan_meier(&ds).unwrap();
            for r in ds.records() {
                let total = cif1.eval(r.time) + cif2.eval(r.time) + km.eval(r.time);
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }
}
