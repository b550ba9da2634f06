//! Binary classification metrics with explicit tie and degenerate-case rules.
//!
//! Labels use 1 for the positive (malignant) class. Undefined metrics are
//! reported as [`Error::UndefinedMetric`] rather than NaN; zero denominators
//! in precision, recall, F1 and MCC yield 0 and are listed in
//! [`MetricsReport::zero_denominators`].

use std::cmp::Ordering;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
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

fn check_labels(labels: &[u8]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::validation("metrics need at least one sample"));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::validation(format!("label {l} is not 0 or 1")));
    }
    Ok(())
}

fn check_scores(labels: &[u8], scores: &[f64]) -> Result<()> {
    check_labels(labels)?;
    if labels.len() != scores.len() {
        return Err(Error::validation(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::validation(format!("non-finite score {s}")));
    }
    Ok(())
}

pub fn confusion(labels: &[u8], preds: &[u8]) -> Result<ConfusionMatrix> {
    check_labels(labels)?;
    if labels.len() != preds.len() {
        return Err(Error::validation(format!(
            "{} labels but {} predictions",
            labels.len(),
            preds.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&l, &p) in labels.iter().zip(preds) {
        match (l, p) {
            (1, 1) => cm.tp += 1,
            (0, 1) => cm.fp += 1,
            (0, 0) => cm.tn += 1,
            (1, 0) => cm.fn_ += 1,
            _ => return Err(Error::validation(format!("prediction {p} is not 0 or 1"))),
        }
    }
    Ok(cm)
}

fn class_counts(labels: &[u8]) -> (u64, u64) {
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    (pos, labels.len() as u64 - pos)
}

/// Area under the ROC curve as the Mann–Whitney statistic, with midranks
/// for tied scores.
pub fn auroc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    check_scores(labels, scores)?;
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::undefined(
            "auroc",
            format!("needs both classes, got {n_pos} positive and {n_neg} negative"),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the block i..=j shares the mean rank
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let block_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        pos_rank_sum += midrank * block_pos as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Step-wise average precision; tied scores form a single threshold step.
pub fn auprc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    check_scores(labels, scores)?;
    let (n_pos, _) = class_counts(labels);
    if n_pos == 0 {
        return Err(Error::undefined("auprc", "no positive samples"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));

    let (mut tp, mut fp) = (0u64, 0u64);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / n_pos as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivedScalars {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub mcc: f64,
    /// Metrics whose denominator was zero and were reported as 0.
    pub zero_denominators: Vec<&'static str>,
}

pub fn derived_scalars(cm: &ConfusionMatrix) -> Result<DerivedScalars> {
    if cm.total() == 0 {
        return Err(Error::validation("confusion matrix is empty"));
    }
    let mut zero_denominators = Vec::new();
    let mut ratio = |name: &'static str, num: f64, den: f64| {
        if den == 0.0 {
            zero_denominators.push(name);
            0.0
        } else {
            num / den
        }
    };
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);

    let precision = ratio("precision", tp, tp + fp);
    let recall = ratio("recall", tp, tp + fn_);
    let f1 = ratio("f1", 2.0 * tp, 2.0 * tp + fp + fn_);
    let mcc = ratio(
        "mcc",
        tp * tn - fp * fn_,
        ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt(),
    );
    let accuracy = (tp + tn) / (tp + fp + tn + fn_);

    if tp + fn_ == 0.0 || tn + fp == 0.0 {
        return Err(Error::undefined(
            "balanced_accuracy",
            "both classes must be present",
        ));
    }
    let balanced_accuracy = (tp / (tp + fn_) + tn / (tn + fp)) / 2.0;

    Ok(DerivedScalars {
        precision,
        recall,
        f1,
        accuracy,
        balanced_accuracy,
        mcc,
        zero_denominators,
    })
}

/// The eight headline metrics plus class counts.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub auroc: f64,
    pub auprc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub mcc: f64,
    pub n_pos: u64,
    pub n_neg: u64,
    pub confusion: ConfusionMatrix,
    pub zero_denominators: Vec<&'static str>,
}

impl MetricsReport {
    pub const METRIC_NAMES: [&'static str; 8] = [
        "auroc",
        "auprc",
        "f1",
        "precision",
        "recall",
        "accuracy",
        "balanced_accuracy",
        "mcc",
    ];

    /// Metric values in table column order.
    pub fn values(&self) -> [f64; 8] {
        [
            self.auroc,
            self.auprc,
            self.f1,
            self.precision,
            self.recall,
            self.accuracy,
            self.balanced_accuracy,
            self.mcc,
        ]
    }
}

/// Scores at or above `threshold` are predicted positive.
pub fn full_report(labels: &[u8], scores: &[f64], threshold: f64) -> Result<MetricsReport> {
    check_scores(labels, scores)?;
    if !threshold.is_finite() {
        return Err(Error::config("decision threshold must be finite"));
    }
    let preds: Vec<u8> = scores.iter().map(|&s| (s >= threshold) as u8).collect();
    let cm = confusion(labels, &preds)?;
    let roc = auroc(labels, scores)?;
    let ap = auprc(labels, scores)?;
    let d = derived_scalars(&cm)?;
    let (n_pos, n_neg) = class_counts(labels);
    Ok(MetricsReport {
        auroc: roc,
        auprc: ap,
        f1: d.f1,
        precision: d.precision,
        recall: d.recall,
        accuracy: d.accuracy,
        balanced_accuracy: d.balanced_accuracy,
        mcc: d.mcc,
        n_pos,
        n_neg,
        confusion: cm,
        zero_denominators: d.zero_denominators,
    })
}
