//! Experiment orchestration behind the `epiloco` binary.
//!
//! Every command resolves a flat config (file plus command-line overrides),
//! writes what it produced under `--out`, prints a one-line JSON summary on
//! success and a JSON error list on stderr with a nonzero exit otherwise.

mod analysis;
mod config;
mod experiment;
mod ledger;
mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

pub use analysis::{compare, report, CompareMedian, CompareRow, Comparison, Report};
pub use config::{ExperimentConfig, Profile, RawConfig, DESK_BATCH_SIZE, DESK_MAX_EPOCHS, DESK_MAX_RECORDS};
pub use experiment::{
    cap_records, cross_cell, load_dataset, make_folds, run_folds, CrossCellMatrix, RunKind, RunSummary,
    RESOLVED_CONFIG_FILE,
};
pub use ledger::{LedgerRow, RunLedger, LEDGER_FILE};

use crate::dataio::{
    generate_synthetic, parse_dataset, read_manifest, read_predictions, validate_dataset, write_dataset, ColumnMap,
    DataError, Dataset, ParseOptions,
};
use crate::evalstats::{auc, EvalError};
use crate::features::FeatureError;
use crate::nnet::{load_weights, Arch, NnetError};
use crate::splits::{materialize, SplitError};
use experiment::{create, open, predict_to_file, train_model, write_resolved_config};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("dataset failed validation with {} violation(s)", .0.len())]
    Invalid(Vec<String>),
    #[error("split: {0}")]
    Split(#[from] SplitError),
    #[error("features: {0}")]
    Features(#[from] FeatureError),
    #[error("model: {0}")]
    Nnet(#[from] NnetError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("ledger: {0}")]
    Ledger(String),
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("{} fold(s) failed", .0.len())]
    FoldsFailed(Vec<String>),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Data(_) => "data",
            CliError::Invalid(_) => "invalid",
            CliError::Split(_) => "split",
            CliError::Features(_) => "features",
            CliError::Nnet(_) => "model",
            CliError::Eval(_) => "evaluation",
            CliError::Ledger(_) => "ledger",
            CliError::Mismatch(_) => "mismatch",
            CliError::FoldsFailed(_) => "fold",
        }
    }

    /// Machine-readable error list: one entry per problem.
    pub fn to_json(&self) -> Value {
        let entry = |message: String| json!({ "kind": self.kind(), "message": message });
        let errors: Vec<Value> = match self {
            CliError::Invalid(v) | CliError::FoldsFailed(v) => v.iter().cloned().map(entry).collect(),
            CliError::Data(DataError::Content(rows)) => rows.iter().map(|r| entry(r.to_string())).collect(),
            other => vec![entry(other.to_string())],
        };
        json!({ "ok": false, "errors": errors })
    }
}

/// Flags shared by every subcommand; each overrides the config key of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    /// Retrain folds that already have valid outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// mcnn, mhybrid, or a comma list.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// k-mer length.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Parser)]
#[command(name = "epiloco", version, about = "Leave-one-chromosome-out EPI benchmarking")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct SplitFlags {
    /// loco or rand.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Random k-fold instead of a single holdout.
    #[arg(long)]
    pub kfold: Option<usize>,
    #[arg(long)]
    pub stratified: Option<bool>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a delimited table, validate it and write it in canonical TSV form.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        cell_line: Option<String>,
        /// Column overrides, e.g. chromosome=chrom,label=y.
        #[arg(long)]
        columns: Option<String>,
    },
    /// Print per-chromosome counts and invariant violations.
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Generate a synthetic dataset from the synth.* keys.
    Synth,
    /// Write fold manifests for one dataset.
    Split {
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        flags: SplitFlags,
    },
    /// Train one model on a dataset, or on the train side of a manifest.
    Train {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Score a dataset, or the test side of a manifest.
    Predict {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        weights: PathBuf,
    },
    /// AUC of prediction files.
    Evaluate {
        #[arg(required = true)]
        predictions: Vec<PathBuf>,
    },
    /// Train and test one model per left-out chromosome.
    LocoRun,
    /// Train and test on a random holdout or random k-fold partition.
    RandsplitRun {
        #[command(flatten)]
        flags: SplitFlags,
    },
    /// Train on each cell line and test on every other one.
    CrossCell,
    /// Fold-wise DeLong comparison of two ledgers, or of two models in one.
    Compare {
        ledger_a: PathBuf,
        ledger_b: Option<PathBuf>,
        #[arg(long)]
        a_model: Option<String>,
        #[arg(long)]
        b_model: Option<String>,
    },
    /// AUC tables, box statistics and plots from one or more ledgers.
    Report {
        #[arg(required = true)]
        ledgers: Vec<PathBuf>,
    },
}

fn resolve(common: &Common, extra: &[(&str, String)]) -> Result<ExperimentConfig, CliError> {
    let mut raw = match &common.config {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    if let Some(s) = common.seed {
        raw.set("seed", s.to_string());
    }
    if let Some(o) = &common.out {
        raw.set("out", o.display().to_string());
    }
    if let Some(p) = common.profile {
        raw.set("profile", p.name());
    }
    if let Some(m) = &common.model {
        raw.set("model", m.clone());
    }
    if let Some(k) = common.k {
        raw.set("k", k.to_string());
    }
    for pair in &common.set {
        raw.set_pair(pair)?;
    }
    for (k, v) in extra {
        raw.set(k, v.clone());
    }
    ExperimentConfig::resolve(&raw)
}

fn split_overrides(flags: &SplitFlags) -> Vec<(&'static str, String)> {
    let mut v = Vec::new();
    if let Some(s) = &flags.split {
        v.push(("split", s.clone()));
    }
    if let Some(f) = flags.test_fraction {
        v.push(("test_fraction", f.to_string()));
    }
    if let Some(k) = flags.kfold {
        v.push(("kfold", k.to_string()));
    }
    if let Some(s) = flags.stratified {
        v.push(("stratified", s.to_string()));
    }
    v
}

/// `--input` if given, else the single configured dataset.
fn single_input(cfg: &ExperimentConfig, input: &Option<PathBuf>) -> Result<(String, PathBuf), CliError> {
    if let Some(p) = input {
        let cell = p.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string();
        return Ok((cell, p.clone()));
    }
    match cfg.datasets.as_slice() {
        [one] => Ok(one.clone()),
        [] => Err(CliError::Config("no --input and no dataset configured".into())),
        _ => Err(CliError::Config("several datasets configured; pass --input".into())),
    }
}

fn single_model(cfg: &ExperimentConfig) -> Result<Arch, CliError> {
    match cfg.models.as_slice() {
        [one] => Ok(*one),
        _ => Err(CliError::Config("this command trains a single model; pass --model mcnn or --model mhybrid".into())),
    }
}

fn ledger_json(summary: &RunSummary) -> Value {
    let folds: Vec<Value> = summary
        .ledger
        .rows
        .iter()
        .map(|r| json!({ "cell_line": r.cell_line, "fold_id": r.fold_id, "model": r.model_tag, "auc": r.auc }))
        .collect();
    json!({
        "ledger": summary.ledger_path,
        "trained": summary.trained,
        "reused": summary.reused,
        "folds": folds,
    })
}

/// Runs a parsed command and returns its JSON summary.
pub fn execute(cli: &Cli) -> Result<Value, CliError> {
    let common = &cli.common;
    let summary = match &cli.command {
        Command::Ingest { input, cell_line, columns } => {
            let mut extra = Vec::new();
            if let Some(c) = columns {
                extra.push(("columns", c.clone()));
            }
            let cfg = resolve(common, &extra)?;
            let cell = cell_line
                .clone()
                .unwrap_or_else(|| input.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string());
            let map = ColumnMap::default().with_overrides(&cfg.columns).map_err(CliError::Config)?;
            let d = parse_dataset(open(input)?, &map, &ParseOptions::inferred(cell.clone()))?;
            let report = validate_dataset(&d);
            let report_path = cfg.out.join(format!("{cell}.validation.txt"));
            std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
            std::fs::write(&report_path, report.to_string()).map_err(|e| CliError::io(&report_path, e))?;
            if !report.is_clean() {
                return Err(CliError::Invalid(report.violations));
            }
            let out = cfg.out.join(format!("{cell}.tsv"));
            write_dataset(&d, create(&out)?)?;
            json!({ "dataset": out, "records": d.len(), "positives": d.n_pos(), "negatives": d.n_neg() })
        }
        Command::Validate { input } => {
            let cfg = resolve(common, &[])?;
            let cell = input.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string();
            let map = ColumnMap::default().with_overrides(&cfg.columns).map_err(CliError::Config)?;
            let d = parse_dataset(open(input)?, &map, &ParseOptions::inferred(cell))?;
            let report = validate_dataset(&d);
            print!("{report}");
            if !report.is_clean() {
                return Err(CliError::Invalid(report.violations));
            }
            json!({ "records": report.total(), "positives": report.n_pos, "negatives": report.n_neg })
        }
        Command::Synth => {
            let cfg = resolve(common, &[])?;
            let d = generate_synthetic(&cfg.synth)?;
            let out = cfg.out.join(format!("{}.tsv", d.cell_line));
            write_dataset(&d, create(&out)?)?;
            write_resolved_config(&cfg)?;
            json!({ "dataset": out, "records": d.len(), "positives": d.n_pos() })
        }
        Command::Split { input, flags } => {
            let cfg = resolve(common, &split_overrides(flags))?;
            let (cell, path) = single_input(&cfg, input)?;
            let d = load_dataset(&cfg, &cell, &path)?;
            let kind = match cfg.split {
                crate::dataio::SplitKind::Loco => RunKind::Loco,
                crate::dataio::SplitKind::Rand => RunKind::Rand,
            };
            let folds = make_folds(&cfg, &d, kind)?;
            let mut written = Vec::new();
            for m in &folds {
                let p = cfg.out.join(format!("{}.manifest", m.fold_id));
                crate::dataio::write_manifest(m, create(&p)?)?;
                written.push(
                    json!({ "fold_id": m.fold_id, "train": m.train_ids.len(), "test": m.test_ids.len(), "path": p }),
                );
            }
            json!({ "folds": written })
        }
        Command::Train { input, manifest } => {
            let cfg = resolve(common, &[])?;
            let arch = single_model(&cfg)?;
            let (cell, path) = single_input(&cfg, input)?;
            let d = load_dataset(&cfg, &cell, &path)?;
            let train_d = match manifest {
                Some(m) => materialize(&d, &read_manifest(open(m)?)?)?.0,
                None => d,
            };
            let weights = cfg.out.join("model.weights");
            write_resolved_config(&cfg)?;
            train_model(&cfg, arch, &train_d, cfg.seed, &weights, Some(&cfg.out.join("loss.csv")))?;
            json!({ "weights": weights, "records": train_d.len(), "model": arch.tag() })
        }
        Command::Predict { input, manifest, weights } => {
            let cfg = resolve(common, &[])?;
            let params = load_weights(open(weights)?)?;
            let k = kmer_k(params.spec.kmer_dim)?;
            let (cell, path) = single_input(&cfg, input)?;
            let cfg = ExperimentConfig { spec: params.spec.clone(), ..cfg };
            let d = load_dataset(&cfg, &cell, &path)?;
            let (test_d, fold_id) = match manifest {
                Some(m) => {
                    let m = read_manifest(open(m)?)?;
                    (materialize(&d, &m)?.1, m.fold_id)
                }
                None => (d, "all".to_string()),
            };
            let out = cfg.out.join("predictions.csv");
            let a = predict_to_file(&params, k, &test_d, &fold_id, &out)?;
            json!({ "predictions": out, "records": test_d.len(), "auc": a })
        }
        Command::Evaluate { predictions } => {
            let mut rows = Vec::new();
            for p in predictions {
                let set = read_predictions(open(p)?)?;
                rows.push(json!({
                    "file": p,
                    "fold_id": set.fold_id,
                    "model": set.model_tag,
                    "n": set.len(),
                    "positives": set.n_pos(),
                    "auc": auc(&set)?,
                }));
            }
            json!({ "evaluations": rows })
        }
        Command::LocoRun => {
            let cfg = resolve(common, &[("split", "loco".into())])?;
            ledger_json(&run_folds(&cfg, RunKind::Loco, common.force)?)
        }
        Command::RandsplitRun { flags } => {
            let mut extra = split_overrides(flags);
            extra.push(("split", "rand".into()));
            let cfg = resolve(common, &extra)?;
            ledger_json(&run_folds(&cfg, RunKind::Rand, common.force)?)
        }
        Command::CrossCell => {
            let cfg = resolve(common, &[])?;
            let matrices = cross_cell(&cfg)?;
            let out: Vec<Value> = matrices
                .iter()
                .map(|m| json!({ "model": m.model_tag, "cell_lines": m.cell_lines, "aucs": m.aucs }))
                .collect();
            json!({ "matrices": out })
        }
        Command::Compare { ledger_a, ledger_b, a_model, b_model } => {
            let cfg = resolve(common, &[])?;
            let b = ledger_b.as_ref().unwrap_or(ledger_a);
            let c = compare(ledger_a, a_model.as_deref(), b, b_model.as_deref())?;
            std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
            let csv_path = cfg.out.join("compare.csv");
            std::fs::write(&csv_path, c.to_csv()).map_err(|e| CliError::io(&csv_path, e))?;
            let svg_path = cfg.out.join("compare.svg");
            std::fs::write(&svg_path, c.to_svg()?).map_err(|e| CliError::io(&svg_path, e))?;
            let medians: Vec<Value> = c
                .medians
                .iter()
                .map(|m| json!({ "cell_line": m.cell_line, "median_auc_a": m.auc_a, "median_auc_b": m.auc_b, "median_delta": m.delta }))
                .collect();
            json!({
                "csv": csv_path,
                "folds": c.rows.len(),
                "significant": c.rows.iter().filter(|r| r.significant()).count(),
                "medians": medians,
            })
        }
        Command::Report { ledgers } => {
            let cfg = resolve(common, &[])?;
            let r = report(ledgers)?;
            r.write(&cfg.out)?;
            json!({ "out": cfg.out, "files": r.files.keys().collect::<Vec<_>>() })
        }
    };
    Ok(summary)
}

fn kmer_k(dim: usize) -> Result<usize, CliError> {
    (1..=crate::features::MAX_K)
        .find(|&k| 1usize << (2 * k) == dim)
        .ok_or_else(|| CliError::Config(format!("weights have k-mer width {dim}, not a power of 4")))
}

/// Parses arguments, runs the command and reports. Returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return 0;
            }
            let err = json!({ "ok": false, "errors": [{ "kind": "usage", "message": e.to_string() }] });
            eprintln!("{err}");
            return 2;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{}", json!({ "ok": true, "result": summary }));
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}

/// Convenience for tests and scripts: parse and run without printing.
pub fn run<I, T>(args: I) -> Result<Value, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    execute(&cli)
}

/// Reads a dataset written by `synth` or `ingest`.
pub fn read_dataset_file(path: &Path, cell_line: &str) -> Result<Dataset, CliError> {
    Ok(parse_dataset(open(path)?, &ColumnMap::default(), &ParseOptions::inferred(cell_line))?)
}
