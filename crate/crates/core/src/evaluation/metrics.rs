//! Ranking and thresholded metrics.
//!
//! Ranking metrics sort once by descending score. ROC quantities group tied
//! scores; average precision breaks ties by input position, so callers that
//! want a specific tie order pass rows in that order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Roc,
    Pr,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::Roc => "roc",
            CurveKind::Pr => "pr",
        }
    }

    pub fn axis_names(self) -> (&'static str, &'static str) {
        match self {
            CurveKind::Roc => ("fpr", "tpr"),
            CurveKind::Pr => ("recall", "precision"),
        }
    }
}

/// ROC points are `(FPR, TPR)`, PR points `(recall, precision)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoints {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
}

impl CurvePoints {
    /// Trapezoidal area under the points.
    pub fn trapezoid_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
            .sum()
    }

    /// Right-continuous step integral `Σ Δx · y`.
    pub fn step_area(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].0 - w[0].0) * w[1].1).sum()
    }
}

fn check_aligned(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::MisalignedScores {
            tag: "scores".into(),
            expected: labels.len(),
            found: scores.len(),
        });
    }
    Ok(())
}

/// Indices by descending score; equal scores keep input order.
pub fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// `(positives, negatives)` per group of tied scores, highest score first.
fn tie_groups(scores: &[f64], labels: &[bool]) -> Vec<(u64, u64)> {
    let order = descending_order(scores);
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut prev: Option<f64> = None;
    for i in order {
        let s = scores[i];
        if prev.is_none_or(|p| p.total_cmp(&s).is_ne()) {
            groups.push((0, 0));
            prev = Some(s);
        }
        let g = groups.last_mut().expect("group pushed above");
        if labels[i] {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

fn class_counts(labels: &[bool]) -> (u64, u64) {
    let p = labels.iter().filter(|&&y| y).count() as u64;
    (p, labels.len() as u64 - p)
}

/// Mann–Whitney estimate of `P(s⁺ > s⁻)` with ties counted as one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_aligned(scores, labels)?;
    let (p, n) = class_counts(labels);
    if p == 0 || n == 0 {
        return Err(Error::SingleClassInput);
    }
    // twice the numerator, kept integral
    let mut doubled: u128 = 0;
    let mut pos_above: u64 = 0;
    for (gp, gn) in tie_groups(scores, labels) {
        doubled += gn as u128 * (2 * pos_above as u128 + gp as u128);
        pos_above += gp;
    }
    Ok(doubled as f64 / (2.0 * p as f64 * n as f64))
}

/// One point per distinct threshold, from `(0, 0)` to `(1, 1)`.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<CurvePoints> {
    check_aligned(scores, labels)?;
    let (p, n) = class_counts(labels);
    if p == 0 || n == 0 {
        return Err(Error::SingleClassInput);
    }
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    for (gp, gn) in tie_groups(scores, labels) {
        tp += gp;
        fp += gn;
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    if points.last() != Some(&(1.0, 1.0)) {
        points.push((1.0, 1.0));
    }
    Ok(CurvePoints {
        kind: CurveKind::Roc,
        points,
    })
}

/// Error-free `a + b = s + e`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Average precision: mean precision at the rank of each positive.
///
/// Accumulated in double-double so rational results round correctly
/// (one positive at rank 1 and one at rank 3 gives exactly the nearest double to 5/6).
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_aligned(scores, labels)?;
    let (p, _) = class_counts(labels);
    if p == 0 {
        return Err(Error::NoPositives);
    }
    let mut tp = 0u64;
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for (rank, i) in descending_order(scores).into_iter().enumerate() {
        if labels[i] {
            tp += 1;
            let (num, den) = (tp as f64, (rank + 1) as f64);
            let q = num / den;
            let residual = (-q).mul_add(den, num) / den;
            let (s, e) = two_sum(hi, q);
            hi = s;
            lo += e + residual;
        }
    }
    let (hi, lo) = two_sum(hi, lo);
    let p = p as f64;
    let q = hi / p;
    Ok(q + ((-q).mul_add(p, hi) + lo) / p)
}

/// `(recall, precision)` after every rank, preceded by `(0, 1)`.
///
/// Its step integral equals [`pr_auc`].
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<CurvePoints> {
    check_aligned(scores, labels)?;
    let (p, _) = class_counts(labels);
    if p == 0 {
        return Err(Error::NoPositives);
    }
    let mut points = Vec::with_capacity(scores.len() + 1);
    points.push((0.0, 1.0));
    let mut tp = 0u64;
    for (rank, i) in descending_order(scores).into_iter().enumerate() {
        tp += labels[i] as u64;
        points.push((tp as f64 / p as f64, tp as f64 / (rank + 1) as f64));
    }
    Ok(CurvePoints {
        kind: CurveKind::Pr,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Predicts positive iff `score >= threshold`.
pub fn confusion_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Confusion> {
    check_aligned(scores, labels)?;
    let mut c = Confusion::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    c.accuracy = ratio(c.tp + c.tn, scores.len() as u64);
    c.precision = ratio(c.tp, c.tp + c.fp);
    c.recall = ratio(c.tp, c.tp + c.fn_);
    c.f1 = f1_score(c.precision, c.recall);
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: [f64; 4] = [0.9, 0.8, 0.7, 0.3];
    const Y: [bool; 4] = [true, false, true, false];

    #[test]
    fn hand_fixture() {
        assert_eq!(roc_auc(&S, &Y).unwrap(), 0.75);
        assert_eq!(pr_auc(&S, &Y).unwrap(), 5.0 / 6.0);
        let c = confusion_metrics(&S, &Y, 0.5).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (2, 1, 1, 0));
        assert_eq!(c.accuracy, 0.75);
        assert_eq!(c.precision, 2.0 / 3.0);
        assert_eq!(c.recall, 1.0);
        assert!((c.f1 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn roc_curve_fixture() {
        let c = roc_curve(&S, &Y).unwrap();
        assert_eq!(
            c.points,
            vec![(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]
        );
        assert_eq!(c.trapezoid_area(), 0.75);
    }

    #[test]
    fn degenerate_rankings() {
        assert_eq!(
            roc_auc(&[0.9, 0.8, 0.1, 0.0], &[true, true, false, false]).unwrap(),
            1.0
        );
        assert_eq!(roc_auc(&[0.4; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        let flat = roc_curve(&[0.4; 3], &[true, false, false]).unwrap();
        assert_eq!(flat.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        let perfect = roc_curve(&[0.9, 0.1], &[true, false]).unwrap();
        assert!(perfect.points.contains(&(0.0, 1.0)));
        assert_eq!(pr_auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(
            pr_auc(&[0.9, 0.8, 0.7, 0.1], &[false, false, false, true]).unwrap(),
            0.25
        );
    }

    #[test]
    fn threshold_edge_cases() {
        let c = confusion_metrics(&S, &Y, 1.1).unwrap();
        assert_eq!((c.precision, c.recall, c.f1), (0.0, 0.0, 0.0));
        let c = confusion_metrics(&[0.2, 0.0], &[true, true], 0.0).unwrap();
        assert_eq!((c.accuracy, c.precision, c.recall, c.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(confusion_metrics(&[], &[], 0.5).unwrap().accuracy == 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[true, true]),
            Err(Error::SingleClassInput)
        ));
        assert!(matches!(roc_curve(&[0.1], &[false]), Err(Error::SingleClassInput)));
        assert!(matches!(pr_auc(&[0.1, 0.2], &[false, false]), Err(Error::NoPositives)));
        assert!(matches!(
            roc_auc(&[0.1], &[true, false]),
            Err(Error::MisalignedScores { .. })
        ));
    }

    #[test]
    fn pr_step_area_is_average_precision() {
        let s = [0.5, 0.5, 0.4, 0.9, 0.1, 0.4];
        let y = [true, false, true, false, true, false];
        let c = pr_curve(&s, &y).unwrap();
        assert!((c.step_area() - pr_auc(&s, &y).unwrap()).abs() < 1e-15);
        assert!(c.points.windows(2).all(|w| w[0].0 <= w[1].0));
    }
}
