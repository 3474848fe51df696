//! Per-fold run records.

use std::path::{Path, PathBuf};

use super::CliError;

pub const LEDGER_FILE: &str = "ledger.csv";

const HEADER: [&str; 12] = [
    "cell_line",
    "fold_id",
    "model_tag",
    "seed",
    "status",
    "auc",
    "n_train",
    "n_test",
    "wall_secs",
    "weights",
    "predictions",
    "config_hash",
];

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub cell_line: String,
    pub fold_id: String,
    pub model_tag: String,
    pub seed: u64,
    /// `ok` or `failed`.
    pub status: String,
    pub auc: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub wall_secs: f64,
    /// Relative to the ledger's directory.
    pub weights: String,
    pub predictions: String,
    pub config_hash: String,
}

impl LedgerRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn key(&self) -> (&str, &str, &str) {
        (&self.cell_line, &self.fold_id, &self.model_tag)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLedger {
    pub rows: Vec<LedgerRow>,
}

impl RunLedger {
    pub fn find(&self, cell_line: &str, fold_id: &str, model_tag: &str) -> Option<&LedgerRow> {
        self.rows.iter().find(|r| r.key() == (cell_line, fold_id, model_tag))
    }

    /// Replaces the row with the same key or appends.
    pub fn upsert(&mut self, row: LedgerRow) {
        match self.rows.iter_mut().find(|r| r.key() == row.key()) {
            Some(slot) => *slot = row,
            None => self.rows.push(row),
        }
    }

    /// Checks every key appears exactly once and all rows share one config hash.
    pub fn check(&self) -> Result<(), CliError> {
        let mut keys: Vec<_> = self.rows.iter().map(LedgerRow::key).collect();
        keys.sort();
        if let Some(w) = keys.windows(2).find(|w| w[0] == w[1]) {
            return Err(CliError::Ledger(format!("fold {} / {} / {} appears twice", w[0].0, w[0].1, w[0].2)));
        }
        if let Some(r) = self.rows.iter().find(|r| r.config_hash != self.rows[0].config_hash) {
            return Err(CliError::Ledger(format!(
                "row {} has config hash {}, expected {}",
                r.fold_id, r.config_hash, self.rows[0].config_hash
            )));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| CliError::Ledger(e.to_string());
        w.write_record(HEADER).map_err(to_err)?;
        for r in &self.rows {
            w.write_record([
                r.cell_line.clone(),
                r.fold_id.clone(),
                r.model_tag.clone(),
                r.seed.to_string(),
                r.status.clone(),
                r.auc.map_or(String::new(), |a| format!("{a:?}")),
                r.n_train.to_string(),
                r.n_test.to_string(),
                format!("{:.3}", r.wall_secs),
                r.weights.clone(),
                r.predictions.clone(),
                r.config_hash.clone(),
            ])
            .map_err(to_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Ledger(e.to_string()))?;
        // Whole-file replace so a crash never leaves a half-written ledger.
        let tmp = path.with_extension("csv.tmp");
        std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bad = |line: usize, m: String| CliError::Ledger(format!("{} line {line}: {m}", path.display()));
        let mut reader = csv::Reader::from_path(path).map_err(|e| bad(0, e.to_string()))?;
        let headers = reader.headers().map_err(|e| bad(1, e.to_string()))?;
        if headers.iter().ne(HEADER) {
            return Err(bad(1, format!("expected header {}", HEADER.join(","))));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| bad(line, e.to_string()))?;
            let num = |j: usize| rec[j].parse::<f64>().map_err(|_| bad(line, format!("bad number '{}'", &rec[j])));
            let int = |j: usize| rec[j].parse::<u64>().map_err(|_| bad(line, format!("bad integer '{}'", &rec[j])));
            rows.push(LedgerRow {
                cell_line: rec[0].to_string(),
                fold_id: rec[1].to_string(),
                model_tag: rec[2].to_string(),
                seed: int(3)?,
                status: rec[4].to_string(),
                auc: if rec[5].is_empty() { None } else { Some(num(5)?) },
                n_train: int(6)? as usize,
                n_test: int(7)? as usize,
                wall_secs: num(8)?,
                weights: rec[9].to_string(),
                predictions: rec[10].to_string(),
                config_hash: rec[11].to_string(),
            });
        }
        Ok(RunLedger { rows })
    }
}

/// Resolves a path stored in a ledger against the ledger's directory.
pub fn ledger_relative(ledger_path: &Path, stored: &str) -> PathBuf {
    ledger_path.parent().unwrap_or(Path::new(".")).join(stored)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(fold: &str, auc: Option<f64>) -> LedgerRow {
        LedgerRow {
            cell_line: "GM12878".into(),
            fold_id: fold.into(),
            model_tag: "mhybrid".into(),
            seed: 7,
            status: if auc.is_some() { "ok" } else { "failed" }.into(),
            auc,
            n_train: 90,
            n_test: 10,
            wall_secs: 1.25,
            weights: format!("GM12878/mhybrid/{fold}.weights"),
            predictions: format!("GM12878/mhybrid/{fold}.predictions.csv"),
            config_hash: "0123456789abcdef".into(),
        }
    }

    #[test]
    fn round_trip_keeps_auc_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(LEDGER_FILE);
        let ledger = RunLedger { rows: vec![row("Chr1", Some(0.1 + 0.2)), row("Chr2", None)] };
        ledger.write(&path).unwrap();
        assert_eq!(RunLedger::read(&path).unwrap(), ledger);
    }

    #[test]
    fn upsert_and_check() {
        let mut ledger = RunLedger::default();
        ledger.upsert(row("Chr1", None));
        ledger.upsert(row("Chr1", Some(0.7)));
        assert_eq!(ledger.rows.len(), 1);
        assert!(ledger.rows[0].is_ok());
        ledger.check().unwrap();
        ledger.rows.push(row("Chr1", Some(0.7)));
        assert!(ledger.check().is_err());
    }
}
