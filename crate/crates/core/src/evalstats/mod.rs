//! Threshold-free evaluation: ROC/AUC, DeLong's paired test and box statistics.

mod delong;
mod roc;
mod summary;

use thiserror::Error;

pub use delong::{delong_test, normal_two_sided_p, DeLongResult};
pub use roc::{auc, midranks, roc_curve, RocResult};
pub use summary::{box_stats, median, median_delta, BoxStats};

/// p-value at or below which a fold comparison is flagged.
pub const SIGNIFICANCE_LEVEL: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("need at least one positive and one negative, got {pos} positive and {neg} negative")]
    SingleClass { pos: usize, neg: usize },
    #[error("need at least {min} positives and {min} negatives, got {pos} and {neg}")]
    TooFewPerClass { min: usize, pos: usize, neg: usize },
    #[error("prediction sets are not paired: {0}")]
    Unpaired(String),
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid prediction set: {0}")]
    Invalid(String),
}

/// Scores with labels for one fold and one model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    pub pair_ids: Vec<String>,
    pub labels: Vec<u8>,
    pub scores: Vec<f64>,
    pub fold_id: String,
    pub model_tag: String,
}

impl PredictionSet {
    pub fn new(fold_id: impl Into<String>, model_tag: impl Into<String>) -> Self {
        Self { fold_id: fold_id.into(), model_tag: model_tag.into(), ..Default::default() }
    }

    pub fn push(&mut self, pair_id: impl Into<String>, label: u8, score: f64) {
        self.pair_ids.push(pair_id.into());
        self.labels.push(label);
        self.scores.push(score);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_pos(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn n_neg(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 0).count()
    }

    /// Equal lengths, labels in {0,1}, scores finite and in [0,1].
    pub fn check(&self) -> Result<(), String> {
        if self.pair_ids.len() != self.labels.len() || self.labels.len() != self.scores.len() {
            return Err(format!(
                "column lengths differ: {} ids, {} labels, {} scores",
                self.pair_ids.len(),
                self.labels.len(),
                self.scores.len()
            ));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l > 1) {
            return Err(format!("label {l} outside {{0,1}}"));
        }
        if let Some(s) = self.scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(format!("score {s} outside [0,1]"));
        }
        Ok(())
    }

    pub(crate) fn class_scores(&self) -> (Vec<f64>, Vec<f64>) {
        let mut pos = Vec::with_capacity(self.n_pos());
        let mut neg = Vec::with_capacity(self.n_neg());
        for (&l, &s) in self.labels.iter().zip(&self.scores) {
            if l == 1 {
                pos.push(s);
            } else {
                neg.push(s);
            }
        }
        (pos, neg)
    }
}
