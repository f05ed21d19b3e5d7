//! Per-sample training objective over the toy scorer.
//!
//! Five passes share one video encoding: the positive query (with moment
//! heads), three hard negatives and an easy negative (saliency only).

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcher::{match_cost, solve, MatchError};
use crate::model::{
    backward_query, encode_video, finish_video, run_query, ModelError, ModelParams, PassGrads,
};
use crate::ranking::{
    class_nll, coarse_loss, combine, contrastive_rank_loss, fine_loss, neg_pair_loss, span_loss,
    BaseLossConfig, CoarseConfig, FineConfig, LossError, LossReport, SaliencyTrack, WeightedTerm,
    SALIENCY_TERM,
};
use crate::span::{ClipSpan, NormSpan};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Match(#[from] MatchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub base: BaseLossConfig,
    pub coarse: CoarseConfig,
    pub fine: FineConfig,
    pub alpha: f64,
    pub beta: f64,
    /// Leave out the base saliency term whenever the intra term is active.
    pub replace_saliency: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            base: BaseLossConfig::default(),
            coarse: CoarseConfig::default(),
            fine: FineConfig::default(),
            alpha: 1.0,
            beta: 1.0,
            replace_saliency: true,
        }
    }
}

impl ObjectiveConfig {
    /// The base loss alone.
    pub fn base_only() -> Self {
        let mut c = Self::default();
        c.coarse.use_intra = false;
        c.coarse.use_inter = false;
        c.fine.use_terms = [false; 4];
        c
    }

    pub fn coarse_enabled(&self) -> bool {
        self.coarse.use_intra || self.coarse.use_inter
    }

    pub fn fine_enabled(&self) -> bool {
        self.fine.use_terms.iter().any(|&b| b)
    }

    pub fn drops_saliency(&self) -> bool {
        self.replace_saliency && self.coarse.use_intra
    }
}

/// One training/eval item: a video with its positive query and three
/// forged hard negatives, all as token ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub id: String,
    /// `T x d_v`
    pub features: Array2<f64>,
    pub span: ClipSpan,
    /// Positive, hn1, hn2, hn3.
    pub queries: [Vec<usize>; 4],
}

impl TrainSample {
    pub fn num_clips(&self) -> usize {
        self.features.nrows()
    }

    pub fn gt(&self) -> NormSpan {
        self.span.to_normalized(self.num_clips())
    }
}

#[derive(Debug, Clone)]
pub struct SampleResult {
    pub report: LossReport,
    /// Moment query matched to the ground truth.
    pub matched: usize,
    /// Raw saliency for positive, hn1..hn3 and the easy negative.
    pub saliency: [Vec<f64>; 5],
}

/// Loss of one sample; when `grads` is given, its parameter gradient is
/// added there. `fixed_match` overrides the matcher (used to hold the
/// assignment constant while probing the loss).
pub fn sample_objective(
    params: &ModelParams,
    sample: &TrainSample,
    easy: &[usize],
    cfg: &ObjectiveConfig,
    fixed_match: Option<usize>,
    grads: Option<&mut ModelParams>,
) -> Result<SampleResult, ObjectiveError> {
    let video = encode_video(params, sample.features.view())?;
    let mut passes = Vec::with_capacity(5);
    passes.push(run_query(params, &video, &sample.queries[0], true)?);
    for q in &sample.queries[1..] {
        passes.push(run_query(params, &video, q, false)?);
    }
    passes.push(run_query(params, &video, easy, false)?);
    let tracks: Vec<SaliencyTrack> = passes.iter().map(|p| SaliencyTrack::new(p.saliency.clone())).collect();

    let span = sample.span;
    let gt = sample.gt();
    let t = sample.num_clips();
    let preds = passes[0].predictions();
    let matched = match fixed_match {
        Some(j) => j,
        None => {
            let cost = match_cost(&preds, &[gt], &cfg.base)?;
            solve(&cost)?.pairs[0].0
        }
    };

    let neg = neg_pair_loss(&tracks[4]);
    let ranks: Vec<usize> = (0..t).map(|i| usize::from(span.contains(i))).collect();
    let sal = contrastive_rank_loss(tracks[0].raw(), &ranks, cfg.base.tau, cfg.base.max_rank)?;
    let targets: Vec<usize> = (0..preds.len()).map(|j| usize::from(j != matched)).collect();
    let cls = class_nll(&passes[0].logits(), &targets)?;
    let sp = span_loss(gt, preds[matched].span, &cfg.base)?;
    let base = [
        WeightedTerm { name: "neg", weight: cfg.base.neg, report: &neg },
        WeightedTerm { name: SALIENCY_TERM, weight: cfg.base.cont, report: &sal },
        WeightedTerm { name: "cls", weight: cfg.base.cls, report: &cls },
        WeightedTerm { name: "span", weight: 1.0, report: &sp },
    ];
    let coarse = if cfg.coarse_enabled() {
        Some(coarse_loss(&tracks[0], &tracks[4], span, &cfg.coarse)?)
    } else {
        None
    };
    let fine = if cfg.fine_enabled() {
        let tr = [&tracks[0], &tracks[1], &tracks[2], &tracks[3], &tracks[4]];
        Some(fine_loss(tr, span, &cfg.fine)?)
    } else {
        None
    };
    let report = combine(&base, coarse.as_ref(), fine.as_ref(), cfg.alpha, cfg.beta, cfg.drops_saliency())?;

    if let Some(grads) = grads {
        let g = |key: &str| report.grad(key).map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; t]);
        let sum = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).map(|(x, y)| x + y).collect::<Vec<_>>();
        let n = preds.len();
        let mut up = vec![PassGrads {
            saliency: sum(g("scores"), g("s_p")),
            span: None,
            logits: None,
        }];
        let mut span_g = Array2::zeros((n, 2));
        if let Some(ps) = report.grad("pred_span") {
            span_g[[matched, 0]] = ps[0];
            span_g[[matched, 1]] = ps[1];
        }
        up[0].span = Some(span_g);
        up[0].logits = report
            .grad("cls_logits")
            .map(|v| Array2::from_shape_vec((n, 2), v.to_vec()).expect("two logits per query"));
        for k in 1..=3 {
            up.push(PassGrads {
                saliency: g(&format!("s_hn{k}")),
                ..Default::default()
            });
        }
        up.push(PassGrads {
            saliency: sum(g("s_neg"), g("s_n")),
            ..Default::default()
        });

        let mut d_xw = Array2::zeros((t, params.config.d_h));
        for (pass, u) in passes.iter().zip(&up) {
            backward_query(params, &video, pass, u, grads, &mut d_xw);
        }
        finish_video(&video, &d_xw, grads);
        if let Some(name) = grads.first_non_finite() {
            return Err(ModelError::NonFiniteGradient(name.to_string()).into());
        }
    }

    let saliency = [0, 1, 2, 3, 4].map(|i| passes[i].saliency.clone());
    Ok(SampleResult {
        report,
        matched,
        saliency,
    })
}
