//! DeLong's test for two correlated AUCs on the same pairs.
//!
//! Structural components come from midranks (O(N log N)): for positive i,
//! `V10[i] = (rank_all[i] - rank_pos[i]) / n`; for negative j,
//! `V01[j] = 1 - (rank_all[j] - rank_neg[j]) / m`.

use std::collections::HashMap;

use libm::erfc;

use super::roc::midranks;
use super::{EvalError, PredictionSet};

/// Below this the variance of the AUC difference is treated as zero.
const DEGENERATE_VARIANCE: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct DeLongResult {
    pub auc_a: f64,
    pub auc_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub covariance: f64,
    /// `auc_a - auc_b`.
    pub delta_auc: f64,
    pub z: f64,
    /// Two-sided.
    pub p_value: f64,
}

impl DeLongResult {
    pub fn is_significant(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

/// Two-sided normal tail `2 (1 - Phi(|z|))`, evaluated as `erfc(|z| / sqrt 2)`
/// so small p-values keep full relative precision.
pub fn normal_two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

struct Components {
    auc: f64,
    v10: Vec<f64>,
    v01: Vec<f64>,
}

fn components(pos: &[f64], neg: &[f64]) -> Components {
    let (m, n) = (pos.len(), neg.len());
    let all: Vec<f64> = pos.iter().chain(neg).copied().collect();
    let rank_all = midranks(&all);
    let rank_pos = midranks(pos);
    let rank_neg = midranks(neg);
    let v10: Vec<f64> = (0..m).map(|i| (rank_all[i] - rank_pos[i]) / n as f64).collect();
    let v01: Vec<f64> = (0..n).map(|j| 1.0 - (rank_all[m + j] - rank_neg[j]) / m as f64).collect();
    let auc = v10.iter().sum::<f64>() / m as f64;
    Components { auc, v10, v01 }
}

fn sample_cov(x: &[f64], y: &[f64]) -> f64 {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (k - 1.0)
}

/// Reorders `b` to follow `a`'s pair order, checking the designs match.
fn paired_scores(a: &PredictionSet, b: &PredictionSet) -> Result<Vec<f64>, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Unpaired(format!("{} vs {} predictions", a.len(), b.len())));
    }
    if a.pair_ids == b.pair_ids {
        if a.labels != b.labels {
            return Err(EvalError::Unpaired("labels differ for the same pair ids".into()));
        }
        return Ok(b.scores.clone());
    }
    let index: HashMap<&str, usize> = b.pair_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    a.pair_ids
        .iter()
        .zip(&a.labels)
        .map(|(id, &label)| {
            let &j = index
                .get(id.as_str())
                .ok_or_else(|| EvalError::Unpaired(format!("pair '{id}' missing from second set")))?;
            if b.labels[j] != label {
                return Err(EvalError::Unpaired(format!("label differs for pair '{id}'")));
            }
            Ok(b.scores[j])
        })
        .collect()
}

/// Paired comparison of the AUCs of `a` and `b` over the same labelled pairs.
pub fn delong_test(a: &PredictionSet, b: &PredictionSet) -> Result<DeLongResult, EvalError> {
    a.check().map_err(EvalError::Invalid)?;
    b.check().map_err(EvalError::Invalid)?;
    let b_scores = paired_scores(a, b)?;
    let (m, n) = (a.n_pos(), a.n_neg());
    if m < 2 || n < 2 {
        return Err(EvalError::TooFewPerClass { min: 2, pos: m, neg: n });
    }

    let aligned_b = PredictionSet { scores: b_scores, ..a.clone() };
    let (pa, na) = a.class_scores();
    let (pb, nb) = aligned_b.class_scores();
    let ca = components(&pa, &na);
    let cb = components(&pb, &nb);

    let (mf, nf) = (m as f64, n as f64);
    let var_a = sample_cov(&ca.v10, &ca.v10) / mf + sample_cov(&ca.v01, &ca.v01) / nf;
    let var_b = sample_cov(&cb.v10, &cb.v10) / mf + sample_cov(&cb.v01, &cb.v01) / nf;
    let covariance = sample_cov(&ca.v10, &cb.v10) / mf + sample_cov(&ca.v01, &cb.v01) / nf;

    let delta_auc = ca.auc - cb.auc;
    let var_diff = var_a + var_b - 2.0 * covariance;
    let (z, p_value) = if var_diff <= DEGENERATE_VARIANCE {
        (0.0, 1.0)
    } else {
        let z = delta_auc / var_diff.sqrt();
        (z, normal_two_sided_p(z))
    };
    Ok(DeLongResult { auc_a: ca.auc, auc_b: cb.auc, var_a, var_b, covariance, delta_auc, z, p_value })
}
