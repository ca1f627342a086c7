//! Binary classification metrics: specificity at constrained sensitivity
//! (the primary clinical metric), ROC AUC, average precision, and
//! accuracy/F1 at the 0.5 cutoff.
//!
//! A row is predicted positive iff its score is at or above the threshold;
//! thresholds range over the observed scores plus positive infinity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sensitivity levels reported by evaluation commands.
pub const SENSITIVITY_LEVELS: [f64; 4] = [0.92, 0.94, 0.96, 0.98];

fn check_both_classes(labels: &[u8]) -> Result<(usize, usize)> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateClass(
            "metric needs both positive and negative labels".into(),
        ));
    }
    Ok((n_pos, n_neg))
}

/// Indices sorted by descending score, with rows of equal score grouped so
/// a sweep can process whole threshold blocks.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    order
}

/// Maximum specificity over all thresholds whose sensitivity is at least
/// `level`; 0 when no threshold qualifies.
pub fn spec_at_sens(scores: &[f64], labels: &[u8], level: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Validation("scores/labels length mismatch".into()));
    }
    let (n_pos, n_neg) = check_both_classes(labels)?;
    let order = descending_order(scores);

    let mut best = f64::NEG_INFINITY;
    // threshold +inf: nothing predicted positive
    if 0.0 >= level {
        best = 1.0;
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
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
        let sensitivity = tp as f64 / n_pos as f64;
        if sensitivity >= level {
            let specificity = (n_neg - fp) as f64 / n_neg as f64;
            if specificity > best {
                best = specificity;
            }
        }
    }
    Ok(if best.is_finite() { best } else { 0.0 })
}

/// Mann-Whitney ROC AUC with half credit for ties.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Validation("scores/labels length mismatch".into()));
    }
    let (n_pos, n_neg) = check_both_classes(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // average ranks over tie groups (1-based)
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let n_pos = n_pos as f64;
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

/// Average precision: precision-weighted recall increments over the
/// descending threshold sweep.
pub fn avg_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Validation("scores/labels length mismatch".into()));
    }
    let (n_pos, _) = check_both_classes(labels)?;
    let order = descending_order(scores);

    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
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
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Fraction of rows classified correctly at the 0.5 probability cutoff.
pub fn accuracy(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Validation("scores/labels length mismatch".into()));
    }
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| u8::from(s >= 0.5) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// F1 score at the 0.5 probability cutoff; 0 when no true or predicted
/// positives exist.
pub fn f1_score(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Validation("scores/labels length mismatch".into()));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&s, &y) in scores.iter().zip(labels) {
        let pred = u8::from(s >= 0.5);
        match (pred, y) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    Ok(if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 })
}

/// Full set of evaluation metrics for one score/label vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Specificity at each sensitivity level, keyed by percent ("92", ...).
    pub spec_at_sens: BTreeMap<String, f64>,
    pub roc_auc: f64,
    pub avg_precision: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl MetricReport {
    pub fn compute(scores: &[f64], labels: &[u8]) -> Result<MetricReport> {
        let (n_pos, n_neg) = check_both_classes(labels)?;
        let mut spec_map = BTreeMap::new();
        for level in SENSITIVITY_LEVELS {
            let key = format!("{:.0}", level * 100.0);
            spec_map.insert(key, spec_at_sens(scores, labels, level)?);
        }
        Ok(MetricReport {
            spec_at_sens: spec_map,
            roc_auc: roc_auc(scores, labels)?,
            avg_precision: avg_precision(scores, labels)?,
            accuracy: accuracy(scores, labels)?,
            f1: f1_score(scores, labels)?,
            n_pos,
            n_neg,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Aligned text table with sensitivity levels as columns, one row per
/// labeled report.
pub fn render_report_table(rows: &[(String, &MetricReport)]) -> String {
    let mut header = format!("{:<24}", "Sensitivity level:");
    for level in SENSITIVITY_LEVELS {
        header.push_str(&format!("{:>8}", format!("{:.0}%", level * 100.0)));
    }
    for extra in ["ROC AUC", "APS", "Acc", "F1"] {
        header.push_str(&format!("{extra:>9}"));
    }
    let mut lines = vec![header];
    for (label, report) in rows {
        let mut line = format!("{label:<24}");
        for level in SENSITIVITY_LEVELS {
            let key = format!("{:.0}", level * 100.0);
            let v = report.spec_at_sens.get(&key).copied().unwrap_or(f64::NAN);
            line.push_str(&format!("{:>8.1}", v * 100.0));
        }
        line.push_str(&format!("{:>9.3}", report.roc_auc));
        line.push_str(&format!("{:>9.3}", report.avg_precision));
        line.push_str(&format!("{:>9.1}", report.accuracy * 100.0));
        line.push_str(&format!("{:>9.1}", report.f1 * 100.0));
        lines.push(line);
    }
    lines.join("\n") + "\n"
}
