//! Evaluation metrics: confusion-derived rates, ROC/AUC with Mann-Whitney
//! tie handling, the DeLong paired-AUC test, and text-overlap scores.

pub mod delong;
pub mod overlap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::stats::midranks;
use crate::tokenizer::TokenCounter;
use crate::Result;

pub use delong::{delong_test, DelongResult};
pub use overlap::{bleu, meteor_style, rouge_l_f1, text_overlap, TextOverlapScores};

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_predictions(truth: &[bool], predicted: &[bool]) -> ConfusionCounts {
        let mut c = ConfusionCounts::default();
        for (t, p) in truth.iter().zip(predicted) {
            match (t, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Confusion-derived rates; a `None` marks an undefined rate (zero
/// denominator) rather than propagating NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub acc: Option<f64>,
    pub f1: Option<f64>,
    pub spe: Option<f64>,
    pub sens: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
}

fn ratio(num: u64, denom: u64) -> Option<f64> {
    (denom > 0).then(|| num as f64 / denom as f64)
}

pub fn classification_metrics(c: &ConfusionCounts) -> ClassificationMetrics {
    let acc = ratio(c.tp + c.tn, c.total());
    let sens = ratio(c.tp, c.tp + c.fn_);
    let spe = ratio(c.tn, c.tn + c.fp);
    let ppv = ratio(c.tp, c.tp + c.fp);
    let npv = ratio(c.tn, c.tn + c.fn_);
    let f1 = match (ppv, sens) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ClassificationMetrics {
        acc,
        f1,
        spe,
        sens,
        ppv,
        npv,
    }
}

/// F1 recomputed from precision and sensitivity (cross-check helper).
pub fn f1_from_ppv_sens(ppv: f64, sens: f64) -> f64 {
    2.0 * ppv * sens / (ppv + sens)
}

/// ROC curve with its area. Points run from (0,0) to (1,1); tied scores
/// collapse into a single sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// AUC via the Mann-Whitney statistic over midranks, ties counting 1/2.
/// Requires both classes present and finite scores.
pub fn roc_auc(labels: &[bool], scores: &[f64]) -> Result<RocCurve> {
    if labels.len() != scores.len() {
        return Err(Error::invalid("labels and scores must have equal length"));
    }
    let m = labels.iter().filter(|l| **l).count();
    let n = labels.len() - m;
    if m == 0 || n == 0 {
        return Err(Error::invalid("ROC needs both classes present"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }

    let ranks = midranks(scores);
    let rank_sum_pos: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(l, _)| **l)
        .map(|(_, r)| *r)
        .sum();
    let auc = (rank_sum_pos - m as f64 * (m as f64 + 1.0) / 2.0) / (m as f64 * n as f64);

    // threshold sweep from the highest score down, one point per tie group
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push((fp as f64 / n as f64, tp as f64 / m as f64));
        i = j + 1;
    }
    Ok(RocCurve { points, auc })
}

/// Mean token count of a set of texts; `None` for an empty set.
pub fn avg_tokens(texts: &[&str], counter: &dyn TokenCounter) -> Option<f64> {
    if texts.is_empty() {
        return None;
    }
    let total: usize = texts.iter().map(|t| counter.count(t)).sum();
    Some(total as f64 / texts.len() as f64)
}
