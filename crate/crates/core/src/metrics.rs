//! Confusion-matrix metrics and ROC AUC. BI is the positive class.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::Label;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {labels} labels, {other} predictions")]
    Length { labels: usize, other: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("AUC undefined: labels contain a single class")]
    SingleClass,
    #[error("non-finite score at row {0}")]
    NonFinite(usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion(labels: &[Label], predictions: &[Label]) -> Result<ConfusionMatrix, MetricsError> {
    if labels.len() != predictions.len() {
        return Err(MetricsError::Length { labels: labels.len(), other: predictions.len() });
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&l, &p) in labels.iter().zip(predictions) {
        match (l, p) {
            (Label::Bi, Label::Bi) => cm.tp += 1,
            (Label::Bo, Label::Bo) => cm.tn += 1,
            (Label::Bo, Label::Bi) => cm.fp += 1,
            (Label::Bi, Label::Bo) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Threshold metrics. A 0/0 ratio evaluates to 0 and is named in `degenerate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub fpr: f64,
    pub degenerate: Vec<String>,
}

pub fn prf1a(cm: &ConfusionMatrix) -> Rates {
    let mut degenerate = Vec::new();
    let mut ratio = |num: u64, den: u64, name: &'static str| {
        if den == 0 {
            degenerate.push(name.to_string());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(cm.tp, cm.tp + cm.fp, "precision");
    let recall = ratio(cm.tp, cm.tp + cm.fn_, "recall");
    let accuracy = ratio(cm.tp + cm.tn, cm.total(), "accuracy");
    let fpr = ratio(cm.fp, cm.tn + cm.fp, "fpr");
    let f1 = if precision + recall == 0.0 {
        degenerate.push("f1".to_string());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Rates { precision, recall, f1, accuracy, fpr, degenerate }
}

fn check_scores(labels: &[Label], scores: &[f64]) -> Result<(usize, usize), MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::Length { labels: labels.len(), other: scores.len() });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    let pos = labels.iter().filter(|l| l.is_positive()).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    Ok((pos, neg))
}

/// Mann-Whitney AUC: P(score_pos > score_neg) + P(tie) / 2, from mid-ranks.
pub fn auc(labels: &[Label], scores: &[f64]) -> Result<f64, MetricsError> {
    let (pos, neg) = check_scores(labels, scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; tied block shares the mean rank
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k].is_positive()).count();
        rank_sum += mid * tied_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// ROC points (FPR, TPR) over all distinct thresholds, from (0,0) to (1,1).
pub fn roc_curve(labels: &[Label], scores: &[f64]) -> Result<Vec<(f64, f64)>, MetricsError> {
    let (pos, neg) = check_scores(labels, scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]].is_positive() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Trapezoidal area under [`roc_curve`].
pub fn auc_trapezoid(labels: &[Label], scores: &[f64]) -> Result<f64, MetricsError> {
    let roc = roc_curve(labels, scores)?;
    Ok(roc.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum())
}

/// Class decision from a BI probability: BI only when strictly above 1/2.
pub fn predict_label(score: f64) -> Label {
    Label::from_bool(score > 0.5)
}

/// Threshold metrics plus AUC for one evaluation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub rates: Rates,
    /// `None` when the labels hold a single class.
    pub auc: Option<f64>,
}

pub fn evaluate(labels: &[Label], scores: &[f64]) -> Result<Evaluation, MetricsError> {
    let preds: Vec<Label> = scores.iter().map(|&s| predict_label(s)).collect();
    let confusion = confusion(labels, &preds)?;
    let auc = match auc(labels, scores) {
        Ok(a) => Some(a),
        Err(MetricsError::SingleClass) => None,
        Err(e) => return Err(e),
    };
    Ok(Evaluation { confusion, rates: prf1a(&confusion), auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Bi, Bo};

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[Bi, Bi, Bo], &[Bi, Bo, Bo]).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 1, tn: 1, fp: 0, fn_: 1 });
        let cm = confusion(&[Bi, Bo, Bo], &[Bi, Bo, Bo]).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
        let cm = confusion(&[Bi, Bo], &[Bi, Bi]).unwrap();
        assert_eq!((cm.tp, cm.fp), (1, 1));
        assert_eq!(confusion(&[Bi], &[]), Err(MetricsError::Length { labels: 1, other: 0 }));
        assert_eq!(confusion(&[], &[]), Err(MetricsError::Empty));
    }

    #[test]
    fn rate_examples() {
        let r = prf1a(&ConfusionMatrix { tp: 3, tn: 0, fp: 1, fn_: 0 });
        assert_eq!(r.precision, 0.75);
        let r = prf1a(&ConfusionMatrix { tp: 3, tn: 4, fp: 1, fn_: 2 });
        assert_eq!(r.accuracy, 0.7);
        // P = 0.75, R = 0.6
        assert!((r.f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-15);
        let r = prf1a(&ConfusionMatrix { tp: 3, tn: 0, fp: 1, fn_: 3 });
        assert_eq!((r.precision, r.recall), (0.75, 0.5));
        assert!((r.f1 - 0.6).abs() < 1e-15);
    }

    #[test]
    fn zero_division_is_flagged() {
        let r = prf1a(&ConfusionMatrix { tp: 0, tn: 5, fp: 0, fn_: 0 });
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert!(r.degenerate.iter().any(|d| d == "precision") && r.degenerate.iter().any(|d| d == "f1"));
        assert!(!r.degenerate.iter().any(|d| d == "fpr"));
    }

    /// O(n^2) pair count.
    fn pairwise(labels: &[Label], scores: &[f64]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                if labels[i] == Bi && labels[j] == Bo {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[Bi, Bo, Bi, Bo], &[0.9, 0.1, 0.8, 0.2]).unwrap(), 1.0);
        assert_eq!(auc(&[Bi, Bo, Bi, Bo], &[0.3; 4]).unwrap(), 0.5);
        let (l, s) = ([Bi, Bo, Bi, Bo], [0.9, 0.8, 0.4, 0.1]);
        let oracle = pairwise(&l, &s);
        assert_eq!(oracle, 0.75);
        assert_eq!(auc(&l, &s).unwrap(), oracle);
        assert_eq!(auc_trapezoid(&l, &s).unwrap(), oracle);
    }

    #[test]
    fn single_class_is_flagged() {
        assert_eq!(auc(&[Bi, Bi], &[0.1, 0.2]), Err(MetricsError::SingleClass));
        let e = evaluate(&[Bo, Bo], &[0.1, 0.9]).unwrap();
        assert_eq!(e.auc, None);
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(predict_label(0.5), Bo);
        assert_eq!(predict_label(0.500_001), Bi);
    }

    fn instance() -> impl Strategy<Value = (Vec<Label>, Vec<f64>)> {
        prop::collection::vec((any::<bool>(), 0u8..20), 2..60)
            .prop_filter("both classes", |v| v.iter().any(|x| x.0) && v.iter().any(|x| !x.0))
            .prop_map(|v| {
                let labels = v.iter().map(|x| Label::from_bool(x.0)).collect();
                // coarse scores so ties are common
                let scores = v.iter().map(|x| f64::from(x.1) / 19.0).collect();
                (labels, scores)
            })
    }

    proptest! {
        #[test]
        fn rank_and_trapezoid_match_pairs((l, s) in instance()) {
            let oracle = pairwise(&l, &s);
            prop_assert!((auc(&l, &s).unwrap() - oracle).abs() < 1e-12);
            prop_assert!((auc_trapezoid(&l, &s).unwrap() - oracle).abs() < 1e-12);
        }

        #[test]
        fn monotone_transform_invariance((l, s) in instance()) {
            let t: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
            prop_assert!((auc(&l, &s).unwrap() - auc(&l, &t).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn complement_symmetry(l in prop::collection::vec(any::<bool>(), 2..40), seed in any::<u64>()) {
            prop_assume!(l.iter().any(|&b| b) && l.iter().any(|&b| !b));
            let labels: Vec<Label> = l.iter().map(|&b| Label::from_bool(b)).collect();
            // distinct scores: i -> i*m mod p is injective for a prime p
            let m = seed % 1_000_002 + 1;
            let s: Vec<f64> = (0..labels.len() as u64).map(|i| (i * m % 1_000_003) as f64).collect();
            let neg: Vec<f64> = s.iter().map(|x| -x).collect();
            prop_assert!((auc(&labels, &neg).unwrap() - (1.0 - auc(&labels, &s).unwrap())).abs() < 1e-12);
        }
    }
}
