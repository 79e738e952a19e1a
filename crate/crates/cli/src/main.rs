//! Reproducible command-line runs over the survrisk library: simulation,
//! model fits, p-value combination, cutpoint search and CIF emission, each
//! producing JSON/CSV artifacts plus a replayable run manifest.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use survrisk::coxph::{self, FitOptions};
use survrisk::dataset::{self, CsvSchema};
use survrisk::frailty::{self, EmOptions, FrailtyDistribution};
use survrisk::pcombine::{self, CombinerKind, MonteCarloConfig};
use survrisk::simulate::{self, Estimators, SimConfig};
use survrisk::threshold::{self, Criterion, QuartileStart, ScanConfig};
use survrisk::Error as CoreError;

use manifest::RunManifest;

/// Competing-risks survival modelling with correlated gamma frailties.
///
/// Exit codes: 0 success, 2 usage error, 3 unreadable or invalid input,
/// 4 computation error (non-convergence, unidentifiable model, ...).
#[derive(Parser)]
#[command(name = "survrisk", version, about)]
struct Cli {
    /// Directory for all output artifacts (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SchemaArgs {
    /// Input dataset (headered CSV).
    data: PathBuf,
    #[arg(long, default_value = "time")]
    time_col: String,
    #[arg(long, default_value = "status")]
    status_col: String,
    #[arg(long)]
    id_col: Option<String>,
    /// Covariate columns, comma-separated.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    /// Gene expression columns, comma-separated.
    #[arg(long, value_delimiter = ',')]
    genes: Vec<String>,
    #[arg(long)]
    cluster_col: Option<String>,
    /// Number of competing causes; inferred from the status column when
    /// omitted.
    #[arg(long)]
    num_causes: Option<usize>,
}

impl SchemaArgs {
    fn schema(&self) -> CsvSchema {
        CsvSchema {
            id_col: self.id_col.clone(),
            time_col: self.time_col.clone(),
            status_col: self.status_col.clone(),
            covariate_cols: self.covariates.clone(),
            gene_cols: self.genes.clone(),
            cluster_col: self.cluster_col.clone(),
            num_causes: self.num_causes,
        }
    }

    fn load(&self) -> Result<survrisk::CompetingRisksDataset, CoreError> {
        dataset::load_csv(&self.data, &self.schema())
    }

    fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(self.schema()).unwrap()
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fisher,
    Pearson,
    MudholkarGeorge,
    Edgington,
    Tippett,
}

impl From<MethodArg> for CombinerKind {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Fisher => CombinerKind::Fisher,
            MethodArg::Pearson => CombinerKind::Pearson,
            MethodArg::MudholkarGeorge => CombinerKind::MudholkarGeorge,
            MethodArg::Edgington => CombinerKind::Edgington,
            MethodArg::Tippett => CombinerKind::Tippett,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    MinP,
    MaxFvar,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistributionArg {
    Gamma,
    Lognormal,
}

impl From<DistributionArg> for FrailtyDistribution {
    fn from(d: DistributionArg) -> Self {
        match d {
            DistributionArg::Gamma => FrailtyDistribution::Gamma,
            DistributionArg::Lognormal => FrailtyDistribution::Lognormal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorsArg {
    Correlated,
    Independent,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartArg {
    Q1,
    Q2,
    Q3,
}

impl From<StartArg> for QuartileStart {
    fn from(s: StartArg) -> Self {
        match s {
            StartArg::Q1 => QuartileStart::Q1,
            StartArg::Q2 => QuartileStart::Q2,
            StartArg::Q3 => QuartileStart::Q3,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a clustered competing-risks dataset.
    Simulate {
        /// Named scenario; `paper-sec3` is the small 3-level, 3-cause setup.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// TOML scenario file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of clusters.
        #[arg(long)]
        clusters: Option<usize>,
        /// Override subjects per cluster.
        #[arg(long)]
        subjects: Option<usize>,
    },
    /// Cause-specific Cox proportional-hazards fit.
    FitCox {
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(long, default_value_t = 1)]
        cause: usize,
    },
    /// Correlated (additive gamma) frailty fit by EM.
    FitFrailty {
        #[command(flatten)]
        schema: SchemaArgs,
        /// Cluster-bootstrap replicates for intervals (0 = skip).
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Independent per-cause gamma frailty fits.
    FitFrailtyIndependent {
        #[command(flatten)]
        schema: SchemaArgs,
    },
    /// Combine p-values by Monte-Carlo calibration.
    CombineP {
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Number of Monte-Carlo null replicates.
        #[arg(long, default_value_t = 100_000)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(required = true)]
        pvalues: Vec<f64>,
    },
    /// Scan one gene's cutoff grid.
    ThresholdScan {
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(long)]
        gene: String,
        #[arg(long, value_enum, default_value = "min-p")]
        criterion: CriterionArg,
        #[arg(long, default_value_t = 1)]
        cause: usize,
        #[arg(long, default_value_t = 0.10)]
        min_arm_fraction: f64,
    },
    /// Single-sweep stepwise multi-gene cutoff search.
    ThresholdStepwise {
        #[command(flatten)]
        schema: SchemaArgs,
        /// Genes in selection order, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        search_genes: Vec<String>,
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["q1", "q2", "q3"])]
        starts: Vec<StartArg>,
        /// Run every gene ordering (G! x starts rows).
        #[arg(long)]
        all_orders: bool,
        /// Maximum number of (ordering, start) cells.
        #[arg(long, default_value_t = 1000)]
        budget: usize,
        #[arg(long, default_value_t = 1)]
        cause: usize,
        #[arg(long, default_value_t = 0.10)]
        min_arm_fraction: f64,
    },
    /// Shared-frailty variances on both sides of given cutoffs.
    ValidatePartitions {
        #[command(flatten)]
        schema: SchemaArgs,
        /// Per-gene cutoffs as gene=value, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        cutoffs: Vec<String>,
        #[arg(long, value_enum, default_value = "gamma")]
        distribution: DistributionArg,
    },
    /// Aalen-Johansen cumulative incidence curves.
    Cif {
        #[command(flatten)]
        schema: SchemaArgs,
    },
    /// Simulation study: R replicates of simulate + fit, summarized.
    ReplicateStudy {
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "both")]
        estimators: EstimatorsArg,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        subjects: Option<usize>,
    },
}

struct CliError {
    exit_code: u8,
    kind: String,
    message: String,
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let (exit_code, kind) = match &e {
            CoreError::Io(_) => (3, "io"),
            CoreError::Csv(_) => (3, "csv"),
            CoreError::Schema(_) => (3, "schema"),
            CoreError::RowValidation(_) => (3, "row-validation"),
            CoreError::EmptyDataset => (3, "empty-dataset"),
            CoreError::InvalidInput(_) => (3, "invalid-input"),
            CoreError::NoEvents { .. } => (4, "no-events"),
            CoreError::SingularInformation { .. } => (4, "singular-information"),
            CoreError::NonConvergence { .. } => (4, "non-convergence"),
            CoreError::ExpansionTooLarge { .. } => (4, "expansion-too-large"),
            CoreError::Unidentifiable(_) => (4, "unidentifiable"),
            CoreError::NoAdmissibleCutoff(_) => (4, "no-admissible-cutoff"),
            CoreError::BudgetExceeded { .. } => (4, "budget-exceeded"),
            CoreError::Undefined(_) => (4, "undefined"),
        };
        CliError {
            exit_code,
            kind: kind.to_string(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            exit_code: 3,
            kind: "io".to_string(),
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError {
            exit_code: 3,
            kind: "csv".to_string(),
            message: e.to_string(),
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value).unwrap())?;
    Ok(())
}

fn resolve_sim_config(
    preset: &Option<String>,
    config: &Option<PathBuf>,
    seed: Option<u64>,
    clusters: Option<usize>,
    subjects: Option<usize>,
) -> Result<SimConfig, CliError> {
    let mut cfg = match (preset.as_deref(), config) {
        (Some("paper-sec3"), None) => SimConfig::paper_sec3(0),
        (Some(other), None) => {
            return Err(CliError {
                exit_code: 3,
                kind: "unknown-preset".into(),
                message: format!("unknown preset '{other}'; available: paper-sec3"),
            })
        }
        (None, Some(path)) => SimConfig::from_toml_file(path)?,
        (None, None) => SimConfig::paper_sec3(0),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(k) = clusters {
        cfg.num_clusters = k;
    }
    if let Some(n) = subjects {
        cfg.subjects_per_cluster = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn percentile_of(values: &[f64], cutoff: f64) -> f64 {
    100.0 * values.iter().filter(|&&v| v < cutoff).count() as f64 / values.len() as f64
}

fn run(cli: Cli) -> Result<(), CliError> {
    let start = Instant::now();
    fs::create_dir_all(&cli.out_dir)?;
    let out = |name: &str| cli.out_dir.join(name);

    let manifest: RunManifest = match &cli.command {
        Command::Simulate {
            preset,
            config,
            seed,
            clusters,
            subjects,
        } => {
            let cfg = resolve_sim_config(preset, config, *seed, *clusters, *subjects)?;
            let mut m = RunManifest::new(
                "simulate",
                serde_json::to_value(&cfg).unwrap(),
                Some(cfg.seed),
            );
            if let Some(path) = config {
                m.add_input(path)?;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let data = simulate::simulate_dataset(&cfg, &mut rng)?;
            let data_path = out("data.csv");
            dataset::save_csv(&data, &data_path)?;
            let cfg_path = out("scenario.toml");
            fs::write(&cfg_path, cfg.to_toml())?;
            m.add_output(&data_path);
            m.add_output(&cfg_path);
            m
        }

        Command::FitCox { schema, cause } => {
            let mut m = RunManifest::new(
                "fit-cox",
                json!({"schema": schema.config_json(), "cause": cause}),
                None,
            );
            m.add_input(&schema.data)?;
            let data = schema.load()?;
            let fit = coxph::fit_cox(&data, *cause, None, &FitOptions::default())?;
            let path = out("fit_cox.json");
            write_json(&path, &fit)?;
            m.add_output(&path);
            m
        }

        Command::FitFrailty {
            schema,
            bootstrap,
            seed,
        } => {
            let mut m = RunManifest::new(
                "fit-frailty",
                json!({"schema": schema.config_json(), "bootstrap": bootstrap, "seed": seed}),
                Some(*seed),
            );
            m.add_input(&schema.data)?;
            let data = schema.load()?;
            let options = EmOptions {
                bootstrap_replicates: *bootstrap,
                seed: *seed,
                ..EmOptions::default()
            };
            let fit = frailty::fit_correlated_frailty(&data, &options)?;
            let path = out("fit_frailty.json");
            write_json(&path, &fit)?;
            m.add_output(&path);
            m
        }

        Command::FitFrailtyIndependent { schema } => {
            let mut m = RunManifest::new(
                "fit-frailty-independent",
                json!({"schema": schema.config_json()}),
                None,
            );
            m.add_input(&schema.data)?;
            let data = schema.load()?;
            let fits = frailty::fit_independent_frailty(&data, &EmOptions::default())?;
            let json_path = out("fit_frailty_independent.json");
            write_json(&json_path, &fits)?;
            let csv_path = out("frailty_variances.csv");
            let mut w = csv::Writer::from_path(&csv_path)?;
            w.write_record(["cause", "frailty_variance", "lrt_pvalue"])?;
            for f in &fits {
                w.write_record([
                    f.cause.to_string(),
                    format!("{:.6e}", f.frailty_variance),
                    format!("{:.6}", f.lrt_pvalue.unwrap_or(f64::NAN)),
                ])?;
            }
            w.flush()?;
            m.add_output(&json_path);
            m.add_output(&csv_path);
            m
        }

        Command::CombineP {
            method,
            m: mc_m,
            seed,
            pvalues,
        } => {
            let kind: CombinerKind = (*method).into();
            let mut m = RunManifest::new(
                "combine-p",
                json!({"method": kind, "m": mc_m, "pvalues": pvalues}),
                Some(*seed),
            );
            let mc = pcombine::monte_carlo_pvalue(
                pvalues,
                kind,
                &MonteCarloConfig {
                    m: *mc_m,
                    seed: *seed,
                },
            )?;
            let analytic = match kind {
                CombinerKind::Fisher => Some(pcombine::fisher_analytic(pvalues)?),
                CombinerKind::Tippett => Some(pcombine::tippett_analytic(pvalues)?),
                _ => None,
            };
            let result = json!({
                "method": kind,
                "statistic": mc.statistic,
                "p_mc": mc.p_corrected,
                "p_mc_uncorrected": mc.p_uncorrected,
                "p_analytic": analytic,
            });
            println!("{}", serde_json::to_string_pretty(&result).unwrap());
            let path = out("combine_p.json");
            write_json(&path, &result)?;
            m.add_output(&path);
            m
        }

        Command::ThresholdScan {
            schema,
            gene,
            criterion,
            cause,
            min_arm_fraction,
        } => {
            let config = ScanConfig {
                criterion: match criterion {
                    CriterionArg::MinP => Criterion::MinP,
                    CriterionArg::MaxFvar => Criterion::MaxFrailtyVariance,
                },
                cause: *cause,
                min_arm_fraction: *min_arm_fraction,
                ..ScanConfig::default()
            };
            let mut m = RunManifest::new(
                "threshold-scan",
                json!({"schema": schema.config_json(), "gene": gene, "config": config}),
                None,
            );
            m.add_input(&schema.data)?;
            let data = schema.load()?;
            let scan = threshold::scan_single_gene(&data, gene, &config)?;
            let json_path = out("threshold_scan.json");
            write_json(&json_path, &scan)?;
            // plot-ready series: criterion values against percentile rank
            let values = data.gene(gene).unwrap();
            let csv_path = out("scan_curve.csv");
            let mut w = csv::Writer::from_path(&csv_path)?;
            w.write_record(["cutoff", "percentile", "p_value", "frailty_variance"])?;
            for (i, &cut) in scan.cutoffs.iter().enumerate() {
                let fv = scan
                    .frailty_variances
                    .as_ref()
                    .map_or(String::new(), |v| format!("{:.6e}", v[i]));
                w.write_record([
                    format!("{cut:.6}"),
                    format!("{:.2}", percentile_of(values, cut)),
                    format!("{:.6e}", scan.p_values[i]),
                    fv,
                ])?;
            }
            w.flush()?;
            m.add_output(&json_path);
            m.add_output(&csv_path);
            m
        }

        Command::ThresholdStepwise {
            schema,
            search_genes,
            starts,
            all_orders,
            budget,
            cause,
            min_arm_fraction,
        } => {
            let config = ScanConfig {
                criterion: Criterion::MinP,
                cause: *cause,
                min_arm_fraction: *min_arm_fraction,
                ..ScanConfig::default()
            };
            let starts: Vec<QuartileStart> = starts.iter().map(|&s| s.into()).collect();
            let mut m = RunManifest::new(
                "threshold-stepwise",
                json!({
                    "schema": schema.config_json(),
                    "genes": search_genes,
                    "starts": starts,
                    "all_orders": all_orders,
                    "budget": budget,
                    "config": config,
                }),
                None,
            );
            m.add_input(&schema.data)?;
            let data = schema.load()?;

            let rows = if *all_orders {
                let report =
                    threshold::all_orderings(&data, search_genes, &starts, &config, *budget)?;
                let cons_path = out("stepwise_consistency.json");
                write_json(&cons_path, &report.consistency)?;
                m.add_output(&cons_path);
                report.rows
            } else {
                starts
                    .iter()
                    .map(|&s| threshold::stepwise_multi_gene(&data, search_genes, s, &config))
                    .collect::<Result<Vec<_>, _>>()?
            };

            let csv_path = out("stepwise.csv");
            let mut w = csv::Writer::from_path(&csv_path)?;
            let g = search_genes.len();
            let mut header = vec!["start".to_string(), "ordering".to_string()];
            header.extend((1..=g).map(|i| format!("cutoff_{i}")));
            header.extend((1..=g).map(|i| format!("p_{i}")));
            w.write_record(&header)?;
            for row in &rows {
                let mut rec = vec![row.start.label().to_string(), row.ordering.join(">")];
                rec.extend(row.cutoffs.iter().map(|c| format!("{c:.6}")));
                rec.extend(row.final_p_values.iter().map(|p| format!("{p:.6e}")));
                w.write_record(&rec)?;
            }
            w.flush()?;
            m.add_output(&csv_path);
            m
        }

        Command::ValidatePartitions {
            schema,
            cutoffs,
            distribution,
        } => {
            let parsed: Vec<(String, f64)> = cutoffs
                .iter()
                .map(|s| {
                    let (gene, value) = s.split_once('=').ok_or_else(|| CliError {
                        exit_code: 3,
                        kind: "invalid-input".into(),
                        message: format!("cutoff '{s}' is not gene=value"),
                    })?;
                    let v: f64 = value.parse().map_err(|_| CliError {
                        exit_code: 3,
                        kind: "invalid-input".into(),
                        message: format!("cutoff value '{value}' is not a number"),
                    })?;
                    Ok((gene.to_string(), v))
                })
                .collect::<Result<_, CliError>>()?;
            let dist: FrailtyDistribution = (*distribution).into();
            let mut m = RunManifest::new(
                "validate-partitions",
                json!({"schema": schema.config_json(), "cutoffs": parsed, "distribution": dist}),
                None,
            );
            m.add_input(&schema.data)?;
            let data = schema.load()?;
            let report =
                threshold::validate_partitions(&data, &parsed, dist, &EmOptions::default())?;
            let csv_path = out("partitions.csv");
            let mut w = csv::Writer::from_path(&csv_path)?;
            w.write_record(["gene", "cutoff", "lower_fvar", "upper_fvar", "note"])?;
            for p in &report {
                let fmt = |c: &threshold::PartitionCell| {
                    c.frailty_variance
                        .map_or("undefined".to_string(), |v| format!("{v:.6e}"))
                };
                let note = [p.lower.note.as_deref(), p.upper.note.as_deref()]
                    .iter()
                    .flatten()
                    .copied()
                    .collect::<Vec<_>>()
                    .join(" | ");
                w.write_record([
                    p.gene.clone(),
                    format!("{:.6}", p.cutoff),
                    fmt(&p.lower),
                    fmt(&p.upper),
                    note,
                ])?;
            }
            w.flush()?;
            let json_path = out("partitions.json");
            write_json(&json_path, &report)?;
            m.add_output(&csv_path);
            m.add_output(&json_path);
            m
        }

        Command::Cif { schema } => {
            let mut m = RunManifest::new("cif", json!({"schema": schema.config_json()}), None);
            m.add_input(&schema.data)?;
            let data = schema.load()?;
            let csv_path = out("cif.csv");
            let mut w = csv::Writer::from_path(&csv_path)?;
            w.write_record(["time", "cif", "cause"])?;
            for cause in 1..=data.num_causes() {
                let curve = dataset::cumulative_incidence(&data, cause)?;
                for (t, v) in curve.iter() {
                    w.write_record([
                        format!("{t:.6}"),
                        format!("{v:.10}"),
                        cause.to_string(),
                    ])?;
                }
            }
            w.flush()?;
            m.add_output(&csv_path);
            m
        }

        Command::ReplicateStudy {
            preset,
            config,
            reps,
            seed,
            estimators,
            clusters,
            subjects,
        } => {
            let cfg = resolve_sim_config(preset, config, *seed, *clusters, *subjects)?;
            let mut m = RunManifest::new(
                "replicate-study",
                json!({
                    "config": cfg,
                    "reps": reps,
                    "estimators": estimators.to_possible_value().unwrap().get_name(),
                }),
                Some(cfg.seed),
            );
            if let Some(path) = config {
                m.add_input(path)?;
            }
            let est = match estimators {
                EstimatorsArg::Correlated => Estimators::Correlated,
                EstimatorsArg::Independent => Estimators::Independent,
                EstimatorsArg::Both => Estimators::Both,
            };
            let summary = simulate::replicate_study(&cfg, *reps, est, &EmOptions::default())?;
            let json_path = out("replicate_summary.json");
            write_json(&json_path, &summary)?;
            let csv_path = out("replicate_summary.csv");
            let mut w = csv::Writer::from_path(&csv_path)?;
            w.write_record([
                "model",
                "parameter",
                "truth",
                "mean_estimate",
                "bias",
                "emp_se",
                "rmse",
                "coverage",
            ])?;
            let mut write_rows =
                |model: &str, rows: &[simulate::ParameterSummary]| -> Result<(), CliError> {
                    for r in rows {
                        w.write_record([
                            model.to_string(),
                            r.parameter.clone(),
                            format!("{:.6}", r.truth),
                            format!("{:.6}", r.mean_estimate),
                            format!("{:.6}", r.bias),
                            format!("{:.6}", r.emp_se),
                            format!("{:.6}", r.rmse),
                            r.coverage.map_or(String::new(), |c| format!("{c:.4}")),
                        ])?;
                    }
                    Ok(())
                };
            write_rows("correlated", &summary.correlated)?;
            write_rows("independent", &summary.independent)?;
            w.flush()?;
            m.add_output(&json_path);
            m.add_output(&csv_path);
            m
        }
    };

    manifest.write(&cli.out_dir, start.elapsed().as_secs_f64())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = json!({
                "error": {"kind": e.kind, "message": e.message, "exit_code": e.exit_code}
            });
            eprintln!("{payload}");
            ExitCode::from(e.exit_code)
        }
    }
}
