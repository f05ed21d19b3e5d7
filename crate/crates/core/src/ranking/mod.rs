//! Loss kernels with analytic gradients.
//!
//! | function | loss |
//! |---|---|
//! | [`coarse_loss`] | intra/inter hinge on top-k pooled raw saliency |
//! | [`fine_loss`] | four-level hinge on NLL distances between squashed tracks (relative or absolute anchoring) |
//! | [`span_loss`] | L1 + (1 - GIoU) on normalized spans |
//! | [`neg_pair_loss`] | mean `-log(1 - s)` for an unrelated query |
//! | [`contrastive_rank_loss`] | rank-level softmax contrast over clips |
//! | [`class_nll`] | foreground/background negative log-likelihood |
//! | [`combine`] | `base + alpha * coarse + beta * fine` |
//!
//! Every function returns a [`LossReport`] whose gradients are with respect
//! to raw (pre-squash) scores, span coordinates or logits, keyed by input name.

mod base;
mod coarse;
mod fine;

pub use base::{
    class_nll, contrastive_rank_loss, giou_1d, giou_1d_with_grad, neg_pair_loss, span_loss,
    BaseLossConfig,
};
pub use coarse::{coarse_loss, max_outside, pooled_pos, CoarseConfig, Pooled};
pub use fine::{
    fine_from_distances, fine_loss, nll_distance, pseudo_label, FineConfig, FineMode,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SQUASH_EPS: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("span is empty or outside the track")]
    EmptySpan,
    #[error("span covers every clip; no outside clips")]
    NoOutsideClips,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("degenerate span (width {0})")]
    DegenerateSpan(f64),
    #[error("non-finite loss term {0}")]
    NonFiniteTerm(String),
}

/// Per-clip saliency for one (video, query) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyTrack {
    raw: Vec<f64>,
    squashed: Vec<f64>,
}

impl SaliencyTrack {
    pub fn new(raw: Vec<f64>) -> Self {
        assert!(!raw.is_empty(), "saliency track needs at least one clip");
        let squashed = raw.iter().map(|&x| squash(x)).collect();
        Self { raw, squashed }
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn squashed(&self) -> &[f64] {
        &self.squashed
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// d squashed / d raw at clip `i`; zero where the clamp is active.
    pub fn squash_grad(&self, i: usize) -> f64 {
        let s = self.squashed[i];
        if s <= SQUASH_EPS || s >= 1.0 - SQUASH_EPS {
            0.0
        } else {
            s * (1.0 - s)
        }
    }

    /// Maps a gradient with respect to the squashed view onto the raw view.
    pub fn to_raw_grad(&self, g_squashed: &[f64]) -> Vec<f64> {
        g_squashed
            .iter()
            .enumerate()
            .map(|(i, g)| g * self.squash_grad(i))
            .collect()
    }
}

/// Logistic function clamped to `[SQUASH_EPS, 1 - SQUASH_EPS]`.
pub fn squash(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(SQUASH_EPS, 1.0 - SQUASH_EPS)
}

/// Scalar terms and gradients of one loss evaluation.
///
/// `total` is `sum(weight * term)`; terms without an explicit weight count
/// with weight 1. Diagnostic entries use weight 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub terms: BTreeMap<String, f64>,
    pub weights: BTreeMap<String, f64>,
    pub grads: BTreeMap<String, Vec<f64>>,
}

impl LossReport {
    pub fn term(&self, name: &str) -> f64 {
        self.terms.get(name).copied().unwrap_or(0.0)
    }

    pub fn weight(&self, name: &str) -> f64 {
        self.weights.get(name).copied().unwrap_or(1.0)
    }

    pub fn grad(&self, name: &str) -> Option<&[f64]> {
        self.grads.get(name).map(|v| v.as_slice())
    }

    pub fn weighted_sum(&self) -> f64 {
        self.terms.iter().map(|(k, v)| self.weight(k) * v).sum()
    }

    pub(crate) fn set_term(&mut self, name: &str, value: f64, weight: f64) {
        self.terms.insert(name.to_string(), value);
        if weight != 1.0 {
            self.weights.insert(name.to_string(), weight);
        }
    }

    pub(crate) fn diagnostic(&mut self, name: &str, value: f64) {
        self.set_term(name, value, 0.0);
    }

    pub(crate) fn add_grad(&mut self, name: &str, g: &[f64], scale: f64) {
        let slot = self
            .grads
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; g.len()]);
        assert_eq!(slot.len(), g.len(), "gradient length for {name}");
        for (s, v) in slot.iter_mut().zip(g) {
            *s += scale * v;
        }
    }

    pub(crate) fn finish(mut self) -> Self {
        self.total = self.weighted_sum();
        self
    }

    /// Folds `other` into `self` with scale `w`, prefixing its term names.
    pub fn absorb(&mut self, prefix: &str, w: f64, other: &LossReport) {
        for (k, v) in &other.terms {
            let name = format!("{prefix}.{k}");
            self.terms.insert(name.clone(), *v);
            self.weights.insert(name, w * other.weight(k));
        }
        for (k, g) in &other.grads {
            self.add_grad(k, g, w);
        }
        self.total = self.weighted_sum();
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads
            .values()
            .flat_map(|g| g.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// One named component of the base loss with its weight.
pub struct WeightedTerm<'a> {
    pub name: &'a str,
    pub weight: f64,
    pub report: &'a LossReport,
}

/// Base component name that `replace_saliency` drops in favour of the intra term.
pub const SALIENCY_TERM: &str = "saliency";

/// `L = L_base + alpha * L_cr + beta * L_fr`.
///
/// With `replace_saliency`, the base component named [`SALIENCY_TERM`] is
/// left out; the intra-video term inside `coarse` takes its role.
pub fn combine(
    base: &[WeightedTerm<'_>],
    coarse: Option<&LossReport>,
    fine: Option<&LossReport>,
    alpha: f64,
    beta: f64,
    replace_saliency: bool,
) -> Result<LossReport, LossError> {
    let mut out = LossReport::default();
    for t in base {
        if replace_saliency && t.name == SALIENCY_TERM {
            continue;
        }
        check_finite(t.name, t.report)?;
        out.absorb(&format!("base.{}", t.name), t.weight, t.report);
    }
    if let Some(c) = coarse {
        check_finite("cr", c)?;
        out.absorb("cr", alpha, c);
    }
    if let Some(f) = fine {
        check_finite("fr", f)?;
        out.absorb("fr", beta, f);
    }
    if !out.total.is_finite() {
        return Err(LossError::NonFiniteTerm("total".into()));
    }
    Ok(out)
}

fn check_finite(name: &str, r: &LossReport) -> Result<(), LossError> {
    if let Some((k, _)) = r.terms.iter().find(|(_, v)| !v.is_finite()) {
        return Err(LossError::NonFiniteTerm(format!("{name}.{k}")));
    }
    if !r.total.is_finite() {
        return Err(LossError::NonFiniteTerm(name.to_string()));
    }
    Ok(())
}

pub(crate) fn hinge(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}
