//! Paired model comparison and report bundles built from ledgers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::experiment::{open, RESOLVED_CONFIG_FILE};
use super::ledger::{ledger_relative, LedgerRow, RunLedger};
use super::svg::{box_plot, Panel};
use super::CliError;
use crate::dataio::{read_predictions, Chromosome};
use crate::evalstats::{box_stats, delong_test, median, median_delta, PredictionSet, SIGNIFICANCE_LEVEL};

/// One fold of a paired comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub cell_line: String,
    pub fold_id: String,
    pub auc_a: f64,
    pub auc_b: f64,
    pub delta_auc: f64,
    pub p_value: f64,
}

impl CompareRow {
    pub fn significant(&self) -> bool {
        self.p_value <= SIGNIFICANCE_LEVEL
    }
}

/// Per-cell-line medians; `delta` is the difference of the median AUCs.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareMedian {
    pub cell_line: String,
    pub auc_a: f64,
    pub auc_b: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub model_a: String,
    pub model_b: String,
    pub rows: Vec<CompareRow>,
    pub medians: Vec<CompareMedian>,
}

/// Ledger rows for one model, keyed by (cell line, fold).
fn select<'a>(ledger: &'a RunLedger, model: Option<&str>, which: &str) -> Result<Vec<&'a LedgerRow>, CliError> {
    let rows: Vec<&LedgerRow> = ledger.rows.iter().filter(|r| model.is_none_or(|m| r.model_tag == m)).collect();
    let tags: BTreeSet<&str> = rows.iter().map(|r| r.model_tag.as_str()).collect();
    if tags.len() > 1 {
        return Err(CliError::Mismatch(format!(
            "ledger {which} holds models {}; choose one with --{which}-model",
            tags.into_iter().collect::<Vec<_>>().join(",")
        )));
    }
    if rows.is_empty() {
        return Err(CliError::Mismatch(format!("ledger {which} has no rows for the requested model")));
    }
    if let Some(r) = rows.iter().find(|r| !r.is_ok()) {
        return Err(CliError::Mismatch(format!("ledger {which}: fold {}/{} failed", r.cell_line, r.fold_id)));
    }
    Ok(rows)
}

fn load_predictions(ledger_path: &Path, row: &LedgerRow) -> Result<PredictionSet, CliError> {
    Ok(read_predictions(open(&ledger_relative(ledger_path, &row.predictions))?)?)
}

/// Fold-by-fold DeLong comparison of two ledgers (or two models in one).
pub fn compare(
    ledger_a: &Path,
    model_a: Option<&str>,
    ledger_b: &Path,
    model_b: Option<&str>,
) -> Result<Comparison, CliError> {
    let la = RunLedger::read(ledger_a)?;
    let lb = RunLedger::read(ledger_b)?;
    let rows_a = select(&la, model_a, "a")?;
    let rows_b = select(&lb, model_b, "b")?;
    let keys = |rows: &[&LedgerRow]| -> BTreeSet<(String, String)> {
        rows.iter().map(|r| (r.cell_line.clone(), r.fold_id.clone())).collect()
    };
    let (ka, kb) = (keys(&rows_a), keys(&rows_b));
    if ka != kb {
        let only_a: Vec<String> = ka.difference(&kb).map(|(c, f)| format!("{c}/{f}")).collect();
        let only_b: Vec<String> = kb.difference(&ka).map(|(c, f)| format!("{c}/{f}")).collect();
        return Err(CliError::Mismatch(format!(
            "fold sets differ: only in a [{}], only in b [{}]",
            only_a.join(" "),
            only_b.join(" ")
        )));
    }

    let mut rows = Vec::with_capacity(rows_a.len());
    for ra in &rows_a {
        let rb = rows_b.iter().find(|r| r.cell_line == ra.cell_line && r.fold_id == ra.fold_id).expect("same key sets");
        let pa = load_predictions(ledger_a, ra)?;
        let pb = load_predictions(ledger_b, rb)?;
        let d =
            delong_test(&pa, &pb).map_err(|e| CliError::Mismatch(format!("{}/{}: {e}", ra.cell_line, ra.fold_id)))?;
        rows.push(CompareRow {
            cell_line: ra.cell_line.clone(),
            fold_id: ra.fold_id.clone(),
            auc_a: d.auc_a,
            auc_b: d.auc_b,
            delta_auc: d.delta_auc,
            p_value: d.p_value,
        });
    }

    let mut medians = Vec::new();
    let cells: BTreeSet<&str> = rows.iter().map(|r| r.cell_line.as_str()).collect();
    for cell in cells {
        let a: Vec<f64> = rows.iter().filter(|r| r.cell_line == cell).map(|r| r.auc_a).collect();
        let b: Vec<f64> = rows.iter().filter(|r| r.cell_line == cell).map(|r| r.auc_b).collect();
        medians.push(CompareMedian {
            cell_line: cell.to_string(),
            auc_a: median(&a)?,
            auc_b: median(&b)?,
            delta: median_delta(&a, &b)?,
        });
    }
    Ok(Comparison { model_a: rows_a[0].model_tag.clone(), model_b: rows_b[0].model_tag.clone(), rows, medians })
}

impl Comparison {
    /// One row per fold, then one `median` row per cell line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cell_line,fold_id,model_a,model_b,auc_a,auc_b,delta_auc,p_value,significant\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6e},{}",
                r.cell_line,
                r.fold_id,
                self.model_a,
                self.model_b,
                r.auc_a,
                r.auc_b,
                r.delta_auc,
                r.p_value,
                r.significant()
            );
        }
        for m in &self.medians {
            let _ = writeln!(
                s,
                "{},median,{},{},{:.6},{:.6},{:.6},,",
                m.cell_line, self.model_a, self.model_b, m.auc_a, m.auc_b, m.delta
            );
        }
        s
    }

    /// Four panels: AUC of each model, fold-wise AUC difference and p-values,
    /// one box per cell line.
    pub fn to_svg(&self) -> Result<String, CliError> {
        let cells: BTreeSet<&str> = self.rows.iter().map(|r| r.cell_line.as_str()).collect();
        let panel = |title: String, f: &dyn Fn(&CompareRow) -> f64| -> Result<Panel, CliError> {
            let mut boxes = Vec::new();
            for &cell in &cells {
                let v: Vec<f64> = self.rows.iter().filter(|r| r.cell_line == cell).map(f).collect();
                boxes.push((cell.to_string(), box_stats(&v)?));
            }
            Ok(Panel { title, boxes })
        };
        Ok(box_plot(&[
            panel(format!("AUC {}", self.model_a), &|r| r.auc_a)?,
            panel(format!("AUC {}", self.model_b), &|r| r.auc_b)?,
            panel(format!("AUC {} - {}", self.model_a, self.model_b), &|r| r.delta_auc)?,
            panel("DeLong p-value".into(), &|r| r.p_value)?,
        ]))
    }
}

/// Chromosome folds in Chr1..Chr23 order, any other fold ids after them.
fn fold_order(a: &str, b: &str) -> std::cmp::Ordering {
    let key = |s: &str| s.parse::<Chromosome>().ok().map(|c| c.number());
    match (key(a), key(b)) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(b),
    }
}

/// Files of a report bundle, name to content.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub files: BTreeMap<String, String>,
}

/// AUC tables per model (folds as rows, cell lines as columns), box
/// statistics, one box plot per cell line and a run manifest.
pub fn report(ledgers: &[PathBuf]) -> Result<Report, CliError> {
    if ledgers.is_empty() {
        return Err(CliError::Config("report needs at least one ledger".into()));
    }
    // (model, cell, fold) -> auc
    let mut aucs: BTreeMap<(String, String, String), f64> = BTreeMap::new();
    let mut runs: BTreeMap<String, (BTreeSet<u64>, Option<String>)> = BTreeMap::new();
    for path in ledgers {
        let ledger = RunLedger::read(path)?;
        for r in ledger.rows.iter().filter(|r| r.is_ok()) {
            let key = (r.model_tag.clone(), r.cell_line.clone(), r.fold_id.clone());
            if aucs.insert(key, r.auc.expect("ok rows carry an AUC")).is_some() {
                return Err(CliError::Mismatch(format!(
                    "{}/{}/{} appears in more than one ledger",
                    r.cell_line, r.model_tag, r.fold_id
                )));
            }
            let entry = runs.entry(r.config_hash.clone()).or_default();
            entry.0.insert(r.seed);
            if entry.1.is_none() {
                entry.1 = std::fs::read_to_string(ledger_relative(path, RESOLVED_CONFIG_FILE)).ok();
            }
        }
    }

    let models: BTreeSet<&str> = aucs.keys().map(|k| k.0.as_str()).collect();
    let cells: BTreeSet<&str> = aucs.keys().map(|k| k.1.as_str()).collect();
    let mut folds: Vec<&str> = aucs.keys().map(|k| k.2.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    folds.sort_by(|a, b| fold_order(a, b));

    let mut files = BTreeMap::new();
    for &model in &models {
        let mut s = format!("fold_id,{}\n", cells.iter().copied().collect::<Vec<_>>().join(","));
        for &fold in &folds {
            let row: Vec<String> = cells
                .iter()
                .map(|&c| {
                    aucs.get(&(model.to_string(), c.to_string(), fold.to_string()))
                        .map_or(String::new(), |a| format!("{a:.4}"))
                })
                .collect();
            if row.iter().any(|v| !v.is_empty()) {
                let _ = writeln!(s, "{fold},{}", row.join(","));
            }
        }
        files.insert(format!("auc_table_{model}.csv"), s);
    }

    let mut stats = String::from("cell_line,model_tag,n,min,q1,median,q3,max\n");
    for &cell in &cells {
        let mut boxes = Vec::new();
        for &model in &models {
            let v: Vec<f64> = aucs.iter().filter(|(k, _)| k.0 == model && k.1 == cell).map(|(_, &a)| a).collect();
            if v.is_empty() {
                continue;
            }
            let b = box_stats(&v)?;
            let _ = writeln!(
                stats,
                "{cell},{model},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                b.n, b.min, b.q1, b.median, b.q3, b.max
            );
            boxes.push((model.to_string(), b));
        }
        files.insert(format!("box_{cell}.svg"), box_plot(&[Panel { title: format!("{cell} fold AUCs"), boxes }]));
    }
    files.insert("box_stats.csv".into(), stats);

    let mut manifest = format!("epiloco {}\n", env!("CARGO_PKG_VERSION"));
    for (hash, (seeds, config)) in &runs {
        let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(manifest, "\n[run {hash}]\nfold_seeds = {}", seeds.join(","));
        if let Some(text) = config {
            manifest.push_str(text);
        }
    }
    files.insert("manifest.txt".into(), manifest);
    Ok(Report { files })
}

impl Report {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (name, content) in &self.files {
            let p = dir.join(name);
            std::fs::write(&p, content).map_err(|e| CliError::io(&p, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chromosome_folds_sort_numerically() {
        let mut v = vec!["Chr10", "rand-1-0", "Chr2", "Chr1", "Chr23"];
        v.sort_by(|a, b| fold_order(a, b));
        assert_eq!(v, ["Chr1", "Chr2", "Chr10", "Chr23", "rand-1-0"]);
    }
}
