//! Train/test partitions: leave-one-chromosome-out folds, stratified random
//! holdouts and random k-fold.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataio::{Dataset, FoldManifest, SplitKind};

pub const DEFAULT_TEST_FRACTION: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("LOCO needs at least 2 chromosomes, dataset has {0}")]
    TooFewChromosomes(usize),
    #[error("test fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("split of {n} records at fraction {fraction} leaves the {side} side empty")]
    EmptySide { n: usize, fraction: f64, side: &'static str },
    #[error("stratified split needs both classes ({pos} positive, {neg} negative)")]
    MissingClass { pos: usize, neg: usize },
    #[error("k={k} folds needs 2 <= k <= {n} records")]
    BadK { k: usize, n: usize },
    #[error("pair_id '{0}' is not in the dataset")]
    UnknownId(String),
}

/// `x` rounded to the nearest integer, halves rounded down.
fn round_half_down(x: f64) -> usize {
    let f = x.floor();
    if x - f > 0.5 {
        f as usize + 1
    } else {
        f as usize
    }
}

fn manifest(d: &Dataset, fold_id: String, kind: SplitKind, seed: Option<u64>, is_test: &[bool]) -> FoldManifest {
    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    for (r, &t) in d.records.iter().zip(is_test) {
        if t {
            test_ids.push(r.pair_id.clone());
        } else {
            train_ids.push(r.pair_id.clone());
        }
    }
    FoldManifest { fold_id, split_kind: kind, train_ids, test_ids, seed, dataset_hash: Some(d.id_hash()) }
}

/// One fold per chromosome present, ordered Chr1..Chr23. Fold `c` tests on
/// exactly the records of chromosome `c`.
pub fn loco_folds(d: &Dataset) -> Result<Vec<FoldManifest>, SplitError> {
    let chroms = d.chromosomes();
    if chroms.len() < 2 {
        return Err(SplitError::TooFewChromosomes(chroms.len()));
    }
    Ok(chroms
        .into_iter()
        .map(|c| {
            let is_test: Vec<bool> = d.records.iter().map(|r| r.chromosome == c).collect();
            manifest(d, c.to_string(), SplitKind::Loco, None, &is_test)
        })
        .collect())
}

/// Record indices split by class, positives first.
fn by_class(d: &Dataset) -> (Vec<usize>, Vec<usize>) {
    (0..d.len()).partition(|&i| d.records[i].label == 1)
}

/// Random holdout; fold id `rand-<seed>-0`. With `stratified`, the positive
/// share of the test set is rounded on its own so class ratios match.
/// Halves round toward the training side.
pub fn random_split(d: &Dataset, test_fraction: f64, stratified: bool, seed: u64) -> Result<FoldManifest, SplitError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SplitError::BadFraction(test_fraction));
    }
    let n = d.len();
    let n_test = round_half_down(n as f64 * test_fraction);
    let side_err = |side| SplitError::EmptySide { n, fraction: test_fraction, side };
    if n_test == 0 {
        return Err(side_err("test"));
    }
    if n_test == n {
        return Err(side_err("train"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; n];
    if stratified {
        let (mut pos, mut neg) = by_class(d);
        if pos.is_empty() || neg.is_empty() {
            return Err(SplitError::MissingClass { pos: pos.len(), neg: neg.len() });
        }
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        let pos_test = round_half_down(pos.len() as f64 * test_fraction).min(n_test);
        let neg_test = (n_test - pos_test).min(neg.len());
        for &i in pos[..pos_test].iter().chain(&neg[..neg_test]) {
            is_test[i] = true;
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        for &i in &all[..n_test] {
            is_test[i] = true;
        }
    }
    Ok(manifest(d, format!("rand-{seed}-0"), SplitKind::Rand, Some(seed), &is_test))
}

/// `k` disjoint test sets covering the dataset, dealt round-robin from a
/// shuffled order (positives then negatives when stratified). Fold ids are
/// `rand-<seed>-1` .. `rand-<seed>-k`.
pub fn random_kfold(d: &Dataset, k: usize, stratified: bool, seed: u64) -> Result<Vec<FoldManifest>, SplitError> {
    let n = d.len();
    if k < 2 || k > n {
        return Err(SplitError::BadK { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = if stratified {
        let (mut pos, mut neg) = by_class(d);
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        pos.into_iter().chain(neg).collect()
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut fold_of = vec![0; n];
    for (slot, &i) in order.iter().enumerate() {
        fold_of[i] = slot % k;
    }
    Ok((0..k)
        .map(|f| {
            let is_test: Vec<bool> = fold_of.iter().map(|&g| g == f).collect();
            manifest(d, format!("rand-{seed}-{}", f + 1), SplitKind::Rand, Some(seed), &is_test)
        })
        .collect())
}

/// Train and test datasets in `d`'s record order.
pub fn materialize(d: &Dataset, m: &FoldManifest) -> Result<(Dataset, Dataset), SplitError> {
    let index: HashMap<&str, usize> = d.records.iter().enumerate().map(|(i, r)| (r.pair_id.as_str(), i)).collect();
    let lookup = |ids: &[String]| -> Result<Vec<usize>, SplitError> {
        let mut idx = ids
            .iter()
            .map(|id| index.get(id.as_str()).copied().ok_or_else(|| SplitError::UnknownId(id.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        idx.sort_unstable();
        Ok(idx)
    };
    Ok((d.subset(&lookup(&m.train_ids)?), d.subset(&lookup(&m.test_ids)?)))
}

/// Near-duplicate pairs (a record and the record it was cloned from) that
/// land on opposite sides of the split.
pub fn straddling_duplicates(d: &Dataset, m: &FoldManifest) -> usize {
    let train: HashSet<&str> = m.train_ids.iter().map(String::as_str).collect();
    let test: HashSet<&str> = m.test_ids.iter().map(String::as_str).collect();
    d.records
        .iter()
        .filter_map(|r| r.clone_of.as_deref().map(|src| (r.pair_id.as_str(), src)))
        .filter(|(a, b)| (train.contains(a) && test.contains(b)) || (test.contains(a) && train.contains(b)))
        .count()
}
