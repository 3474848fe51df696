use super::EvalError;

/// Five-number summary for box plots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Inclusive linear interpolation between order statistics: position
/// `(n - 1) * p` in the sorted values.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_finite(values: &[f64]) -> Result<Vec<f64>, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(EvalError::Invalid(format!("non-finite value {v}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats, EvalError> {
    let sorted = sorted_finite(values)?;
    Ok(BoxStats {
        n: sorted.len(),
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

pub fn median(values: &[f64]) -> Result<f64, EvalError> {
    Ok(quantile_sorted(&sorted_finite(values)?, 0.5))
}

/// `median(a) - median(b)` over fold-aligned AUC lists. This is the
/// difference of medians, which in general differs from the median of the
/// per-fold differences.
pub fn median_delta(aucs_a: &[f64], aucs_b: &[f64]) -> Result<f64, EvalError> {
    if aucs_a.len() != aucs_b.len() {
        return Err(EvalError::LengthMismatch(aucs_a.len(), aucs_b.len()));
    }
    Ok(median(aucs_a)? - median(aucs_b)?)
}
