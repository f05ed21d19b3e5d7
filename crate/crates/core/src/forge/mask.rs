use serde::{Deserialize, Serialize};

use super::ForgeError;
use crate::tagger::{Tag, TaggedQuery};

/// Positions to mask in one query at one ratio, in selection order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub query_id: String,
    pub ratio: f64,
    pub masked_positions: Vec<usize>,
    pub masked_classes: Vec<Tag>,
}

impl MaskPlan {
    pub fn len(&self) -> usize {
        self.masked_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masked_positions.is_empty()
    }

    pub fn sorted_positions(&self) -> Vec<usize> {
        let mut p = self.masked_positions.clone();
        p.sort_unstable();
        p
    }
}

/// `max(1, round_half_up(ratio * maskable))`, capped at `maskable`.
pub fn mask_count(ratio: f64, maskable: usize) -> usize {
    // the small bias keeps products like 0.35 * 10 = 3.4999... on the half-up side
    let n = (ratio * maskable as f64 + 0.5 + 1e-9).floor() as usize;
    n.max(1).min(maskable)
}

/// Primitive positions in masking order: by class importance, then left to
/// right, with the subject appended last.
fn masking_order(q: &TaggedQuery) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..q.len())
        .filter(|&i| q.tags[i].is_primitive() && Some(i) != q.subject_index)
        .collect();
    order.sort_by_key(|&i| (q.tags[i].importance(), i));
    let non_subject = order.len();
    if let Some(s) = q.subject_index {
        if q.tags[s].is_primitive() {
            order.push(s);
        }
    }
    (order, non_subject)
}

pub fn plan_masks(q: &TaggedQuery, ratio: f64) -> Result<MaskPlan, ForgeError> {
    let (order, non_subject) = masking_order(q);
    if order.is_empty() {
        return Err(ForgeError::NoPrimitives(q.query_id.clone()));
    }
    // the subject only counts toward P when nothing else is maskable
    let maskable = if non_subject > 0 { non_subject } else { order.len() };
    let n = mask_count(ratio, maskable);
    let masked_positions: Vec<usize> = order[..n].to_vec();
    let masked_classes = masked_positions.iter().map(|&i| q.tags[i]).collect();
    Ok(MaskPlan {
        query_id: q.query_id.clone(),
        ratio,
        masked_positions,
        masked_classes,
    })
}

pub fn build_hierarchy(q: &TaggedQuery, ratios: [f64; 3]) -> Result<[MaskPlan; 3], ForgeError> {
    let in_range = ratios.iter().all(|r| *r > 0.0 && *r < 1.0);
    let increasing = ratios[0] < ratios[1] && ratios[1] < ratios[2];
    if !in_range || !increasing {
        return Err(ForgeError::BadRatios(ratios));
    }
    Ok([
        plan_masks(q, ratios[0])?,
        plan_masks(q, ratios[1])?,
        plan_masks(q, ratios[2])?,
    ])
}
