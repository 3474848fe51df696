//! Fold-wise training runs and cross-cell-line transfer.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::ledger::{LedgerRow, RunLedger, LEDGER_FILE};
use super::CliError;
use crate::dataio::{
    parse_dataset, read_predictions, validate_dataset, write_manifest, write_predictions, ColumnMap, Dataset,
    FoldManifest, ParseOptions,
};
use crate::evalstats::auc;
use crate::features::featurize_records;
use crate::nnet::{
    build_model, load_weights_expecting, predict, save_weights, train, write_loss_history, Arch, ModelParams,
    TrainConfig,
};
use crate::splits::{loco_folds, materialize, random_kfold, random_split};

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved";

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

pub fn write_resolved_config(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let path = cfg.out.join(RESOLVED_CONFIG_FILE);
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    std::fs::write(&path, cfg.to_text()).map_err(|e| CliError::io(&path, e))
}

/// Parses and validates a dataset file, then crops to the model's input
/// lengths and applies the record cap.
pub fn load_dataset(cfg: &ExperimentConfig, cell_line: &str, path: &Path) -> Result<Dataset, CliError> {
    let columns = ColumnMap::default().with_overrides(&cfg.columns).map_err(CliError::Config)?;
    let d = parse_dataset(open(path)?, &columns, &ParseOptions::inferred(cell_line))?;
    let report = validate_dataset(&d);
    if !report.is_clean() {
        return Err(CliError::Invalid(report.violations));
    }
    let (el, pl) = (cfg.spec.enhancer_len, cfg.spec.promoter_len);
    if d.enhancer_len < el || d.promoter_len < pl {
        return Err(CliError::Config(format!(
            "{cell_line}: sequences are {}/{} bp, the model needs {el}/{pl}",
            d.enhancer_len, d.promoter_len
        )));
    }
    let d = if (d.enhancer_len, d.promoter_len) == (el, pl) { d } else { d.center_crop(el, pl) };
    Ok(cap_records(d, cfg.record_cap, cfg.seed))
}

/// Seeded uniform subsample that keeps file order.
pub fn cap_records(d: Dataset, cap: Option<usize>, seed: u64) -> Dataset {
    match cap {
        Some(cap) if d.len() > cap => {
            let mut idx: Vec<usize> = (0..d.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            idx.truncate(cap);
            idx.sort_unstable();
            d.subset(&idx)
        }
        _ => d,
    }
}

/// Which fold generator a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Loco,
    Rand,
}

pub fn make_folds(cfg: &ExperimentConfig, d: &Dataset, kind: RunKind) -> Result<Vec<FoldManifest>, CliError> {
    Ok(match kind {
        RunKind::Loco => loco_folds(d)?,
        RunKind::Rand => match cfg.kfold {
            Some(k) => random_kfold(d, k, cfg.stratified, cfg.seed)?,
            None => vec![random_split(d, cfg.test_fraction, cfg.stratified, cfg.seed)?],
        },
    })
}

/// Result of a fold-wise run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub ledger_path: PathBuf,
    pub ledger: RunLedger,
    pub trained: usize,
    pub reused: usize,
}

struct FoldFiles {
    weights: String,
    predictions: String,
    loss: String,
}

fn fold_files(cell: &str, arch: Arch, fold_id: &str) -> FoldFiles {
    let base = format!("{cell}/{}/{fold_id}", arch.tag());
    FoldFiles {
        weights: format!("{base}.weights"),
        predictions: format!("{base}.predictions.csv"),
        loss: format!("{base}.loss.csv"),
    }
}

/// A previous row is reused only if it succeeded under the same config and
/// its weights and predictions still load and reproduce the recorded AUC.
fn reusable(row: &LedgerRow, cfg: &ExperimentConfig, hash: &str, arch: Arch) -> bool {
    if !row.is_ok() || row.config_hash != hash {
        return false;
    }
    let spec = cfg.spec_for(arch);
    let weights_ok = open(&cfg.out.join(&row.weights)).ok().is_some_and(|f| load_weights_expecting(f, &spec).is_ok());
    let preds_ok = open(&cfg.out.join(&row.predictions))
        .ok()
        .and_then(|f| read_predictions(f).ok())
        .and_then(|p| auc(&p).ok())
        .is_some_and(|a| Some(a) == row.auc);
    weights_ok && preds_ok
}

/// Trains on `train_d` from `seed`, writing weights and loss history.
pub fn train_model(
    cfg: &ExperimentConfig,
    arch: Arch,
    train_d: &Dataset,
    seed: u64,
    weights_path: &Path,
    loss_path: Option<&Path>,
) -> Result<ModelParams, CliError> {
    let features = featurize_records(&train_d.records, cfg.k)?;
    let model = build_model(&cfg.spec_for(arch), seed)?;
    let tc = TrainConfig { seed, ..cfg.train.clone() };
    let outcome = train(model, train_d, &features, &tc)?;
    save_weights(&outcome.params, create(weights_path)?)?;
    if let Some(p) = loss_path {
        write_loss_history(&outcome.history, create(p)?).map_err(|e| CliError::io(p, e))?;
    }
    Ok(outcome.params)
}

/// Scores `d`, writes the prediction file and returns the AUC.
pub fn predict_to_file(
    params: &ModelParams,
    k: usize,
    d: &Dataset,
    fold_id: &str,
    path: &Path,
) -> Result<f64, CliError> {
    let features = featurize_records(&d.records, k)?;
    let preds = predict(params, d, &features, fold_id)?;
    write_predictions(&preds, create(path)?)?;
    Ok(auc(&preds)?)
}

// A failed fold still yields its ledger row, so the error carries it.
#[allow(clippy::result_large_err)]
fn run_fold(
    cfg: &ExperimentConfig,
    hash: &str,
    d: &Dataset,
    m: &FoldManifest,
    arch: Arch,
    seed: u64,
) -> Result<LedgerRow, (LedgerRow, CliError)> {
    let files = fold_files(&d.cell_line, arch, &m.fold_id);
    let mut row = LedgerRow {
        cell_line: d.cell_line.clone(),
        fold_id: m.fold_id.clone(),
        model_tag: arch.tag().to_string(),
        seed,
        status: "failed".into(),
        auc: None,
        n_train: m.train_ids.len(),
        n_test: m.test_ids.len(),
        wall_secs: 0.0,
        weights: files.weights.clone(),
        predictions: files.predictions.clone(),
        config_hash: hash.to_string(),
    };
    let start = Instant::now();
    let result = (|| -> Result<f64, CliError> {
        let (train_d, test_d) = materialize(d, m)?;
        let params =
            train_model(cfg, arch, &train_d, seed, &cfg.out.join(&files.weights), Some(&cfg.out.join(&files.loss)))?;
        predict_to_file(&params, cfg.k, &test_d, &m.fold_id, &cfg.out.join(&files.predictions))
    })();
    row.wall_secs = start.elapsed().as_secs_f64();
    match result {
        Ok(a) => {
            row.status = "ok".into();
            row.auc = Some(a);
            Ok(row)
        }
        Err(e) => Err((row, e)),
    }
}

/// Trains and evaluates every fold of every configured dataset for every
/// model. Per-fold seed is the global seed XOR the fold's ordinal. Folds
/// already recorded with valid outputs are skipped unless `force`.
pub fn run_folds(cfg: &ExperimentConfig, kind: RunKind, force: bool) -> Result<RunSummary, CliError> {
    cfg.check_datasets(1)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    write_resolved_config(cfg)?;
    let hash = cfg.hash();
    let ledger_path = cfg.out.join(LEDGER_FILE);
    let previous = if !force && ledger_path.is_file() { RunLedger::read(&ledger_path)? } else { RunLedger::default() };

    let mut current = RunLedger::default();
    let mut failures = Vec::new();
    let (mut trained, mut reused) = (0, 0);
    for (cell, path) in &cfg.datasets {
        let d = load_dataset(cfg, cell, path)?;
        let folds = make_folds(cfg, &d, kind)?;
        for m in &folds {
            let p = cfg.out.join(cell).join("folds").join(format!("{}.manifest", m.fold_id));
            write_manifest(m, create(&p)?)?;
        }
        for &arch in &cfg.models {
            for (i, m) in folds.iter().enumerate() {
                let seed = cfg.seed ^ i as u64;
                let row = match previous.find(cell, &m.fold_id, arch.tag()) {
                    Some(r) if r.seed == seed && reusable(r, cfg, &hash, arch) => {
                        reused += 1;
                        r.clone()
                    }
                    _ => {
                        trained += 1;
                        match run_fold(cfg, &hash, &d, m, arch, seed) {
                            Ok(row) => row,
                            Err((row, e)) => {
                                failures.push(format!("{cell}/{}/{}: {e}", arch.tag(), m.fold_id));
                                row
                            }
                        }
                    }
                };
                current.rows.push(row);
                // Keep not-yet-visited old rows so an interrupted resume can resume again.
                let mut snapshot = current.clone();
                for r in &previous.rows {
                    if current.find(&r.cell_line, &r.fold_id, &r.model_tag).is_none() {
                        snapshot.rows.push(r.clone());
                    }
                }
                snapshot.write(&ledger_path)?;
            }
        }
    }
    current.write(&ledger_path)?;
    if !failures.is_empty() {
        return Err(CliError::FoldsFailed(failures));
    }
    current.check()?;
    Ok(RunSummary { ledger_path, ledger: current, trained, reused })
}

/// AUC matrix: `aucs[test][train]`, `None` on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCellMatrix {
    pub model_tag: String,
    pub cell_lines: Vec<String>,
    pub aucs: Vec<Vec<Option<f64>>>,
}

impl CrossCellMatrix {
    /// Training cell lines as columns, testing cell lines as rows, `*` on the diagonal.
    pub fn to_csv(&self) -> String {
        let mut s = format!("test\\train,{}\n", self.cell_lines.join(","));
        for (i, test) in self.cell_lines.iter().enumerate() {
            s.push_str(test);
            for a in &self.aucs[i] {
                s.push(',');
                match a {
                    Some(v) => s.push_str(&format!("{v:.4}")),
                    None => s.push('*'),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Trains one model per cell line on its full data and scores every other cell line.
pub fn cross_cell(cfg: &ExperimentConfig) -> Result<Vec<CrossCellMatrix>, CliError> {
    cfg.check_datasets(2)?;
    let mut canonical: Vec<(PathBuf, &str)> = Vec::new();
    for (cell, path) in &cfg.datasets {
        let c = path.canonicalize().map_err(|e| CliError::io(path, e))?;
        if let Some((_, other)) = canonical.iter().find(|(p, _)| *p == c) {
            return Err(CliError::Config(format!(
                "{cell} and {other} are the same file; a cell line cannot be tested on itself"
            )));
        }
        canonical.push((c, cell));
    }
    write_resolved_config(cfg)?;
    let datasets: Vec<Dataset> =
        cfg.datasets.iter().map(|(cell, path)| load_dataset(cfg, cell, path)).collect::<Result<_, _>>()?;
    for (i, a) in datasets.iter().enumerate() {
        if let Some(b) = datasets[..i].iter().find(|b| b.id_hash() == a.id_hash()) {
            return Err(CliError::Config(format!(
                "{} and {} hold identical pairs; a cell line cannot be tested on itself",
                a.cell_line, b.cell_line
            )));
        }
    }

    let cells: Vec<String> = cfg.datasets.iter().map(|(c, _)| c.clone()).collect();
    let mut matrices = Vec::new();
    for &arch in &cfg.models {
        let dir = cfg.out.join("cross-cell").join(arch.tag());
        let mut aucs = vec![vec![None; cells.len()]; cells.len()];
        for (ti, train_d) in datasets.iter().enumerate() {
            let seed = cfg.seed ^ ti as u64;
            let params = train_model(
                cfg,
                arch,
                train_d,
                seed,
                &dir.join(format!("{}.weights", cells[ti])),
                Some(&dir.join(format!("{}.loss.csv", cells[ti]))),
            )?;
            for (si, test_d) in datasets.iter().enumerate() {
                if si == ti {
                    continue;
                }
                let path = dir.join(format!("{}_on_{}.predictions.csv", cells[ti], cells[si]));
                aucs[si][ti] = Some(predict_to_file(&params, cfg.k, test_d, &cells[si], &path)?);
            }
        }
        let m = CrossCellMatrix { model_tag: arch.tag().to_string(), cell_lines: cells.clone(), aucs };
        let path = cfg.out.join("cross-cell").join(format!("matrix_{}.csv", arch.tag()));
        std::fs::write(&path, m.to_csv()).map_err(|e| CliError::io(&path, e))?;
        matrices.push(m);
    }
    Ok(matrices)
}
