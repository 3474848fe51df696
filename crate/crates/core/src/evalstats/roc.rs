use super::{EvalError, PredictionSet};

/// 1-based ranks with ties replaced by the mean of the ranks they span.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their mean
        let mid = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mid;
        }
        start = end;
    }
    ranks
}

fn require_both_classes(pred: &PredictionSet) -> Result<(usize, usize), EvalError> {
    pred.check().map_err(EvalError::Invalid)?;
    let (pos, neg) = (pred.n_pos(), pred.n_neg());
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass { pos, neg });
    }
    Ok((pos, neg))
}

/// Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie), via the rank sum.
pub fn auc(pred: &PredictionSet) -> Result<f64, EvalError> {
    let (m, n) = require_both_classes(pred)?;
    let ranks = midranks(&pred.scores);
    let rank_sum: f64 = ranks.iter().zip(&pred.labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    let (m, n) = (m as f64, n as f64);
    Ok((rank_sum - m * (m + 1.0) / 2.0) / (m * n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocResult {
    /// (fpr, tpr) from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    /// Trapezoidal area under `points`.
    pub auc: f64,
}

/// Threshold sweep over distinct scores, highest first. Tied scores move
/// together, giving one diagonal segment per tie group. Only corners are
/// kept: points in the middle of a straight run are dropped.
pub fn roc_curve(pred: &PredictionSet) -> Result<RocResult, EvalError> {
    let (m, n) = require_both_classes(pred)?;
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred.scores[b].total_cmp(&pred.scores[a]));

    // vertices in integer (fp, tp) counts; collinear runs collapse to their ends
    let mut corners: Vec<(i64, i64)> = vec![(0, 0)];
    let (mut tp, mut fp) = (0i64, 0i64);
    let mut i = 0;
    while i < order.len() {
        let threshold = pred.scores[order[i]];
        while i < order.len() && pred.scores[order[i]] == threshold {
            if pred.labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if let [.., a, b] = corners[..] {
            if (b.0 - a.0) * (tp - b.1) == (b.1 - a.1) * (fp - b.0) {
                corners.pop();
            }
        }
        corners.push((fp, tp));
    }
    let points: Vec<(f64, f64)> = corners.iter().map(|&(f, t)| (f as f64 / n as f64, t as f64 / m as f64)).collect();
    let auc = points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum();
    Ok(RocResult { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(labels: &[u8], scores: &[f64]) -> PredictionSet {
        let mut p = PredictionSet::new("f", "m");
        for (i, (&l, &s)) in labels.iter().zip(scores).enumerate() {
            p.push(format!("p{i}"), l, s);
        }
        p
    }

    fn brute_force_auc(p: &PredictionSet) -> f64 {
        let (pos, neg) = p.class_scores();
        let mut total = 0.0;
        for &a in &pos {
            for &b in &neg {
                total += if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
        total / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&set(&[1, 0], &[0.9, 0.1])).unwrap(), 1.0);
        let p = set(&[1, 0, 1, 0], &[0.8, 0.8, 0.6, 0.4]);
        assert_eq!(brute_force_auc(&p), 0.625);
        assert!((auc(&p).unwrap() - 0.625).abs() < 1e-15);
        assert_eq!(auc(&set(&[1, 0, 1, 0, 0], &[0.3; 5])).unwrap(), 0.5);
        assert_eq!(auc(&set(&[1, 1], &[0.3, 0.4])), Err(EvalError::SingleClass { pos: 2, neg: 0 }));
    }

    #[test]
    fn roc_examples() {
        let perfect = roc_curve(&set(&[1, 1, 0, 0], &[0.9, 0.8, 0.2, 0.1])).unwrap();
        assert_eq!(perfect.points, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(perfect.auc, 1.0);
        let constant = roc_curve(&set(&[1, 0, 0], &[0.5; 3])).unwrap();
        assert_eq!(constant.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(constant.auc, 0.5);
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    fn arb_set() -> impl Strategy<Value = PredictionSet> {
        (2usize..120)
            .prop_flat_map(|n| {
                (
                    proptest::collection::vec(0u8..2, n),
                    proptest::collection::vec(prop_oneof![(0u32..20).prop_map(|k| k as f64 / 20.0), 0.0..=1.0f64], n),
                )
            })
            .prop_filter("both classes", |(l, _)| l.contains(&0) && l.contains(&1))
            .prop_map(|(l, s)| set(&l, &s))
    }

    proptest! {
        #[test]
        fn trapezoid_equals_rank_sum(p in arb_set()) {
            let roc = roc_curve(&p).unwrap();
            prop_assert!((roc.auc - auc(&p).unwrap()).abs() < 1e-12);
            prop_assert!((auc(&p).unwrap() - brute_force_auc(&p)).abs() < 1e-12);
            prop_assert_eq!(*roc.points.last().unwrap(), (1.0, 1.0));
            for w in roc.points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
        }

        #[test]
        fn auc_invariant_under_monotone_transform(p in arb_set()) {
            // snap to a grid so the transform cannot merge distinct floats
            let mut p = p;
            p.scores.iter_mut().for_each(|s| *s = (*s * 1000.0).round() / 1000.0);
            let mut q = p.clone();
            q.scores.iter_mut().for_each(|s| *s = s.powi(3) * 0.5 + 0.25);
            prop_assert!((auc(&p).unwrap() - auc(&q).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn label_swap_with_negated_scores_preserves_auc(p in arb_set()) {
            let mut p = p;
            p.scores.iter_mut().for_each(|s| *s = (*s * 1000.0).round() / 1000.0);
            let mut q = p.clone();
            q.labels.iter_mut().for_each(|l| *l = 1 - *l);
            q.scores.iter_mut().for_each(|s| *s = 1.0 - *s);
            prop_assert!((auc(&p).unwrap() - auc(&q).unwrap()).abs() < 1e-12);
        }
    }
}
