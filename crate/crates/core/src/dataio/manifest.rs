use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use super::record::Dataset;
use super::{DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitKind {
    Loco,
    Rand,
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitKind::Loco => "LOCO",
            SplitKind::Rand => "RAND",
        })
    }
}

impl FromStr for SplitKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "LOCO" => Ok(SplitKind::Loco),
            "RAND" => Ok(SplitKind::Rand),
            other => Err(format!("unknown split kind '{other}'")),
        }
    }
}

/// A train/test partition of a dataset by pair id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldManifest {
    /// Left-out chromosome (`Chr7`) for LOCO, `rand-<seed>-<index>` otherwise.
    pub fold_id: String,
    pub split_kind: SplitKind,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: Option<u64>,
    /// [`Dataset::id_hash`] of the dataset the manifest was cut from.
    pub dataset_hash: Option<String>,
}

fn check_token(what: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.contains(['\t', '\n', '\r']) {
        return Err(DataError::ManifestInvariant(format!("{what} '{s}' is empty or has tab/newline")));
    }
    Ok(())
}

impl FoldManifest {
    /// Structural invariants: disjoint sides, no repeated ids, writable tokens.
    pub fn check_invariants(&self) -> Result<()> {
        check_token("fold_id", &self.fold_id)?;
        let mut seen = HashSet::with_capacity(self.train_ids.len() + self.test_ids.len());
        for id in &self.train_ids {
            check_token("pair_id", id)?;
            if !seen.insert(id.as_str()) {
                return Err(DataError::ManifestInvariant(format!("pair_id '{id}' repeated in train")));
            }
        }
        for id in &self.test_ids {
            check_token("pair_id", id)?;
            if !seen.insert(id.as_str()) {
                return Err(DataError::ManifestInvariant(format!("pair_id '{id}' in both train and test")));
            }
        }
        Ok(())
    }

    /// Problems found when applying the manifest to `d`: hash mismatch,
    /// unknown ids, incomplete coverage and (LOCO) test-set chromosome purity.
    /// Empty means the manifest fits the dataset.
    pub fn audit(&self, d: &Dataset) -> Vec<String> {
        let mut problems = Vec::new();
        if let Some(hash) = &self.dataset_hash {
            let actual = d.id_hash();
            if *hash != actual {
                problems.push(format!("dataset hash {actual} differs from manifest header {hash}"));
            }
        }
        let by_id: HashMap<&str, usize> = d.records.iter().enumerate().map(|(i, r)| (r.pair_id.as_str(), i)).collect();
        for id in self.train_ids.iter().chain(&self.test_ids) {
            if !by_id.contains_key(id.as_str()) {
                problems.push(format!("pair_id '{id}' not in dataset"));
            }
        }
        if self.train_ids.len() + self.test_ids.len() != d.len() {
            problems.push(format!(
                "manifest covers {} ids, dataset has {}",
                self.train_ids.len() + self.test_ids.len(),
                d.len()
            ));
        }
        if self.split_kind == SplitKind::Loco {
            for id in &self.test_ids {
                if let Some(&i) = by_id.get(id.as_str()) {
                    if d.records[i].chromosome.to_string() != self.fold_id {
                        problems
                            .push(format!("test id '{id}' is on {}, not {}", d.records[i].chromosome, self.fold_id));
                    }
                }
            }
            for id in &self.train_ids {
                if let Some(&i) = by_id.get(id.as_str()) {
                    if d.records[i].chromosome.to_string() == self.fold_id {
                        problems.push(format!("train id '{id}' is on the left-out {}", self.fold_id));
                    }
                }
            }
        }
        problems
    }
}

/// Header line, then one `train\t<id>` or `test\t<id>` line per pair.
pub fn write_manifest<W: Write>(m: &FoldManifest, mut sink: W) -> Result<()> {
    m.check_invariants()?;
    let seed = m.seed.map_or_else(|| "-".to_string(), |s| s.to_string());
    let hash = m.dataset_hash.as_deref().unwrap_or("-");
    writeln!(sink, "#fold_id={}\tsplit_kind={}\tseed={seed}\tdataset={hash}", m.fold_id, m.split_kind)?;
    for id in &m.train_ids {
        writeln!(sink, "train\t{id}")?;
    }
    for id in &m.test_ids {
        writeln!(sink, "test\t{id}")?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_manifest<R: Read>(source: R) -> Result<FoldManifest> {
    let mut lines = BufReader::new(source).lines();
    let bad = |line: usize, message: String| DataError::ManifestFormat { line, message };
    let header = lines.next().ok_or_else(|| bad(1, "empty manifest".into()))??;
    let header = header.trim_end_matches('\r');
    let fields: HashMap<&str, &str> = header
        .strip_prefix('#')
        .ok_or_else(|| bad(1, "header must start with '#'".into()))?
        .split('\t')
        .filter_map(|kv| kv.split_once('='))
        .collect();
    let field = |k: &str| fields.get(k).copied().ok_or_else(|| bad(1, format!("header lacks '{k}'")));
    let fold_id = field("fold_id")?.to_string();
    let split_kind = field("split_kind")?.parse::<SplitKind>().map_err(|e| bad(1, e))?;
    let seed = match field("seed")? {
        "-" => None,
        s => Some(s.parse::<u64>().map_err(|_| bad(1, format!("bad seed '{s}'")))?),
    };
    let dataset_hash = match field("dataset")? {
        "-" => None,
        h => Some(h.to_string()),
    };

    let (mut train_ids, mut test_ids) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some(("train", id)) if !id.is_empty() => train_ids.push(id.to_string()),
            Some(("test", id)) if !id.is_empty() => test_ids.push(id.to_string()),
            _ => return Err(bad(i + 2, format!("expected 'train\\t<id>' or 'test\\t<id>', got '{line}'"))),
        }
    }
    let m = FoldManifest { fold_id, split_kind, train_ids, test_ids, seed, dataset_hash };
    m.check_invariants()?;
    Ok(m)
}
