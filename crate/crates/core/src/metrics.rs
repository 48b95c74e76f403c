//! Confusion-matrix metrics and ROC analysis.
//!
//! Ratios with a zero denominator are reported as `None`, never as 0.

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Count outcomes with P as the positive class.
pub fn confusion(predicted: &[Label], truth: &[Label]) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (Label::P, Label::P) => cm.tp += 1,
            (Label::P, Label::N) => cm.fp += 1,
            (Label::N, Label::N) => cm.tn += 1,
            (Label::N, Label::P) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn harmonic(p: Option<f64>, r: Option<f64>) -> Option<f64> {
    let (p, r) = (p?, r?);
    (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
}

fn mean2(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? + b?) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    /// TP / (TP + FP)
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    /// TP / (TP + FN)
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_standard: Option<f64>,
    /// TN / (TN + FN), the negative predictive value under its published name.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_published: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_standard: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_published: Option<f64>,
    /// Mean of the P-class and N-class precisions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
}

pub fn report(cm: &ConfusionMatrix) -> MetricsReport {
    let ConfusionMatrix { tp, fp, tn, fn_ } = *cm;
    let precision = ratio(tp, tp + fp);
    let recall_standard = ratio(tp, tp + fn_);
    let recall_published = ratio(tn, tn + fn_);
    let precision_n = ratio(tn, tn + fn_);
    let recall_n = ratio(tn, tn + fp);
    MetricsReport {
        accuracy: ratio(tp + tn, cm.total()),
        precision,
        recall_standard,
        recall_published,
        f1_standard: harmonic(precision, recall_standard),
        f1_published: harmonic(precision, recall_published),
        macro_precision: mean2(precision, precision_n),
        macro_recall: mean2(recall_standard, recall_n),
        macro_f1: mean2(
            harmonic(precision, recall_standard),
            harmonic(precision_n, recall_n),
        ),
    }
}

impl MetricsReport {
    /// `key=value` lines; undefined entries print as `absent`.
    pub fn to_text(&self) -> String {
        let rows = [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall_standard", self.recall_standard),
            ("recall_published", self.recall_published),
            ("f1_standard", self.f1_standard),
            ("f1_published", self.f1_published),
            ("macro_precision", self.macro_precision),
            ("macro_recall", self.macro_recall),
            ("macro_f1", self.macro_f1),
        ];
        rows.iter()
            .map(|(k, v)| match v {
                Some(v) => format!("{k}={v}\n"),
                None => format!("{k}=absent\n"),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Descending; starts at +inf and ends at -inf.
    pub thresholds: Vec<f64>,
    /// `(fpr, tpr)` for each threshold.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for (t, (f, p)) in self.thresholds.iter().zip(&self.points) {
            out.push_str(&format!("{t},{f},{p}\n"));
        }
        out.push_str(&format!("# auc={}\n", self.auc));
        out
    }
}

fn check_scores(scores: &[f64], labels: &[Label]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let n_p = labels.iter().filter(|l| l.is_positive()).count() as u64;
    let n_n = labels.len() as u64 - n_p;
    if n_p == 0 || n_n == 0 {
        return Err(Error::invalid("ROC needs at least one item of each class"));
    }
    Ok((n_p, n_n))
}

/// Threshold sweep with "score >= T means P". The area is accumulated in
/// integer pair counts, so it equals [`mann_whitney_auc`] bit for bit.
pub fn roc(scores: &[f64], labels: &[Label]) -> Result<RocCurve> {
    let (n_p, n_n) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut thresholds = vec![f64::INFINITY];
    let mut counts = vec![(0u64, 0u64)];
    let (mut tp, mut fp) = (0u64, 0u64);
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
        thresholds.push(s);
        counts.push((fp, tp));
    }
    thresholds.push(f64::NEG_INFINITY);
    counts.push((n_n, n_p));

    let mut twice_area: u128 = 0;
    for w in counts.windows(2) {
        let (f0, t0) = w[0];
        let (f1, t1) = w[1];
        twice_area += (f1 - f0) as u128 * (t0 + t1) as u128;
    }
    let points = counts
        .iter()
        .map(|&(f, t)| (f as f64 / n_n as f64, t as f64 / n_p as f64))
        .collect();
    Ok(RocCurve {
        thresholds,
        points,
        auc: twice_area as f64 / (2 * n_p as u128 * n_n as u128) as f64,
    })
}

/// Probability that a random P item outscores a random N item, ties
/// counting one half.
pub fn mann_whitney_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (n_p, n_n) = check_scores(scores, labels)?;
    let mut neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| !l.is_positive())
        .map(|(&s, _)| s)
        .collect();
    neg.sort_by(f64::total_cmp);
    let mut twice: u128 = 0;
    for (&s, l) in scores.iter().zip(labels) {
        if l.is_positive() {
            let below = neg.partition_point(|&v| v < s) as u128;
            let not_above = neg.partition_point(|&v| v <= s) as u128;
            twice += 2 * below + (not_above - below);
        }
    }
    Ok(twice as f64 / (2 * n_p as u128 * n_n as u128) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(p: usize, n: usize) -> Vec<Label> {
        std::iter::repeat_n(Label::P, p)
            .chain(std::iter::repeat_n(Label::N, n))
            .collect()
    }

    #[test]
    fn confusion_examples() {
        let t = labels(10, 10);
        assert_eq!(
            confusion(&t, &t).unwrap(),
            ConfusionMatrix { tp: 10, fp: 0, tn: 10, fn_: 0 }
        );
        assert_eq!(
            confusion(&[Label::P; 20], &t).unwrap(),
            ConfusionMatrix { tp: 10, fp: 10, tn: 0, fn_: 0 }
        );
        assert!(confusion(&[], &[]).is_err());
        assert!(confusion(&[Label::P], &[]).is_err());
    }

    #[test]
    fn report_examples() {
        let r = report(&ConfusionMatrix { tp: 50, fp: 5, tn: 40, fn_: 5 });
        assert_eq!(r.accuracy, Some(0.9));
        assert_eq!(r.recall_published, Some(40.0 / 45.0));
        assert!((r.recall_published.unwrap() - 0.8889).abs() < 1e-4);
        let r = report(&ConfusionMatrix { tp: 0, fp: 0, tn: 10, fn_: 0 });
        assert_eq!(r.precision, None);
        assert_eq!(r.f1_standard, None);
        assert!(r.to_text().contains("precision=absent"));
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("\"precision\""));
    }

    #[test]
    fn roc_extremes() {
        let l = labels(3, 4);
        let sep = [0.9, 0.8, 0.7, 0.3, 0.2, 0.1, 0.0];
        let c = roc(&sep, &l).unwrap();
        assert_eq!(c.auc, 1.0);
        assert_eq!(c.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(c.points.last(), Some(&(1.0, 1.0)));
        let same = [0.4; 7];
        assert_eq!(roc(&same, &l).unwrap().auc, 0.5);
        assert_eq!(mann_whitney_auc(&same, &l).unwrap(), 0.5);
        assert!(roc(&[0.1, 0.2], &[Label::P, Label::P]).is_err());
        assert!(c.to_csv().ends_with("# auc=1\n"));
    }

    proptest! {
        #[test]
        fn trapezoid_equals_mann_whitney(
            raw in proptest::collection::vec((0u8..20, any::<bool>()), 2..60)
        ) {
            let mut raw = raw;
            raw[0].1 = true;
            raw[1].1 = false;
            let scores: Vec<f64> = raw.iter().map(|r| r.0 as f64 / 7.0).collect();
            let labels: Vec<Label> = raw.iter().map(|r| if r.1 { Label::P } else { Label::N }).collect();
            let c = roc(&scores, &labels).unwrap();
            prop_assert_eq!(c.auc, mann_whitney_auc(&scores, &labels).unwrap());
            prop_assert!(c.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
            // strictly increasing transform
            let t: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
            prop_assert_eq!(roc(&t, &labels).unwrap().auc, c.auc);
            // label swap
            let swapped: Vec<Label> = labels.iter().map(|l| l.other()).collect();
            let a = roc(&scores, &swapped).unwrap().auc;
            prop_assert!((a - (1.0 - c.auc)).abs() < 1e-12);
        }

        #[test]
        fn accuracy_identity(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500) {
            let cm = ConfusionMatrix { tp, fp, tn, fn_ };
            prop_assume!(cm.total() > 0);
            let r = report(&cm);
            let acc = r.accuracy.unwrap();
            prop_assert_eq!((acc * cm.total() as f64).round() as u64, tp + tn);
            for v in [r.precision, r.recall_standard, r.recall_published, r.f1_standard, r.f1_published].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
