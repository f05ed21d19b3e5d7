//! Grounding metrics and saliency-ordering diagnostics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::span::MomentSpan;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("query {0} has no predictions")]
    EmptyPredictions(usize),
    #[error("record {index} has {got} pooled values, expected 5")]
    MissingTrack { index: usize, got: usize },
    #[error("{preds} prediction lists for {gts} ground truths")]
    LengthMismatch { preds: usize, gts: usize },
    #[error("ablation grid is empty")]
    EmptyGrid,
}

/// Intersection over union of two `(start, end)` intervals.
pub fn iou_interval(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

pub fn iou_1d(a: &MomentSpan, b: &MomentSpan) -> f64 {
    iou_interval((a.start, a.end), (b.start, b.end))
}

/// Fraction of queries whose top-`n` predictions hold one with IoU strictly above `m`.
pub fn recall_at(
    preds: &[Vec<MomentSpan>],
    gts: &[MomentSpan],
    n: usize,
    m: f64,
) -> Result<f64, EvalError> {
    if preds.len() != gts.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            gts: gts.len(),
        });
    }
    if let Some(i) = preds.iter().position(|p| p.is_empty()) {
        return Err(EvalError::EmptyPredictions(i));
    }
    if gts.is_empty() {
        return Ok(0.0);
    }
    let hits = preds
        .iter()
        .zip(gts)
        .filter(|(p, g)| p.iter().take(n).any(|s| iou_1d(s, g) > m))
        .count();
    Ok(hits as f64 / gts.len() as f64)
}

/// Mean top-1 IoU.
pub fn mean_iou(top1: &[MomentSpan], gts: &[MomentSpan]) -> Result<f64, EvalError> {
    if top1.len() != gts.len() {
        return Err(EvalError::LengthMismatch {
            preds: top1.len(),
            gts: gts.len(),
        });
    }
    if gts.is_empty() {
        return Ok(0.0);
    }
    Ok(top1.iter().zip(gts).map(|(p, g)| iou_1d(p, g)).sum::<f64>() / gts.len() as f64)
}

fn check_records(records: &[Vec<f64>]) -> Result<(), EvalError> {
    match records.iter().position(|r| r.len() != 5) {
        Some(index) => Err(EvalError::MissingTrack {
            index,
            got: records[index].len(),
        }),
        None => Ok(()),
    }
}

/// Fraction of records `[S_p, S1, S2, S3, S_n]` (pooled over the positive
/// span) that are strictly decreasing. Ties count as violations.
pub fn ordering_accuracy(records: &[Vec<f64>]) -> Result<f64, EvalError> {
    check_records(records)?;
    if records.is_empty() {
        return Ok(0.0);
    }
    let ok = records
        .iter()
        .filter(|r| r.windows(2).all(|w| w[0] > w[1]))
        .count();
    Ok(ok as f64 / records.len() as f64)
}

/// Fraction of adjacent level pairs `(k, k+1)` over all records that are
/// not strictly ordered.
pub fn hierarchy_violation_rate(records: &[Vec<f64>]) -> Result<f64, EvalError> {
    check_records(records)?;
    if records.is_empty() {
        return Ok(0.0);
    }
    let bad = records
        .iter()
        .flat_map(|r| r.windows(2).map(|w| w[0] <= w[1]).collect::<Vec<_>>())
        .filter(|&b| b)
        .count();
    Ok(bad as f64 / (4 * records.len()) as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    #[serde(rename = "R1@0.5")]
    pub r1_05: f64,
    #[serde(rename = "R1@0.7")]
    pub r1_07: f64,
    #[serde(rename = "mIoU")]
    pub miou: f64,
    pub ordering_accuracy: f64,
    pub hierarchy_violation_rate: f64,
}

impl SplitMetrics {
    pub const NAMES: [&'static str; 5] = [
        "R1@0.5",
        "R1@0.7",
        "mIoU",
        "ordering_accuracy",
        "hierarchy_violation_rate",
    ];

    pub fn values(&self) -> [f64; 5] {
        [
            self.r1_05,
            self.r1_07,
            self.miou,
            self.ordering_accuracy,
            self.hierarchy_violation_rate,
        ]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Self {
            r1_05: v[0],
            r1_07: v[1],
            miou: v[2],
            ordering_accuracy: v[3],
            hierarchy_violation_rate: v[4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fingerprint: String,
    pub seed: u64,
    pub splits: BTreeMap<String, SplitMetrics>,
}
