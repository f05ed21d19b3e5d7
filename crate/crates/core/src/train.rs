//! Plain gradient-descent training of the toy scorer.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forge::sample_easy_negative;
use crate::model::ModelParams;
use crate::objective::{sample_objective, ObjectiveConfig, ObjectiveError, TrainSample};
use crate::ranking::LossReport;
use crate::util::{derive_seed, rng_for};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    DivergedLoss {
        epoch: usize,
        batch: usize,
        last_good: Box<ModelParams>,
    },
    #[error("training set needs at least two samples")]
    EmptyTrainSet,
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("trace: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.02,
            epochs: 100,
            batch: 8,
            clip_norm: 10.0,
            seed: 0,
        }
    }
}

/// Mean loss terms of one epoch plus any evaluation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub terms: BTreeMap<String, f64>,
    pub grad_norm: f64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub trace: Vec<EpochRecord>,
}

/// Batch-mean loss report and parameter gradient. Sample `i` uses
/// `easy[i]` as its easy negative.
pub fn batch_gradient(
    params: &ModelParams,
    batch: &[&TrainSample],
    easy: &[&[usize]],
    cfg: &ObjectiveConfig,
) -> Result<(LossReport, ModelParams), ObjectiveError> {
    let mut grads = ModelParams::zeros(params.config);
    let mut mean = LossReport::default();
    let w = 1.0 / batch.len() as f64;
    for (s, e) in batch.iter().zip(easy) {
        let r = sample_objective(params, s, e, cfg, None, Some(&mut grads))?;
        for (k, v) in &r.report.terms {
            *mean.terms.entry(k.clone()).or_insert(0.0) += w * v;
        }
        mean.weights = r.report.weights;
        mean.total += w * r.report.total;
    }
    grads.scale(w);
    Ok((mean, grads))
}

/// Easy-negative token lists for a batch, drawn from the other members.
pub fn easy_negatives<'a>(batch: &[&'a TrainSample], seed: u64) -> Vec<&'a [usize]> {
    let ids: Vec<String> = batch.iter().map(|s| s.id.clone()).collect();
    (0..batch.len())
        .map(|i| {
            let pick = sample_easy_negative(&ids, i, seed).expect("batch of two or more");
            let j = ids.iter().position(|x| *x == pick).expect("id from batch");
            batch[j].queries[0].as_slice()
        })
        .collect()
}

/// Errors that mean the parameters have blown up rather than bad input.
fn is_divergence(e: &ObjectiveError) -> bool {
    use crate::matcher::MatchError;
    match e {
        ObjectiveError::Loss(crate::ranking::LossError::NonFiniteTerm(_))
        | ObjectiveError::Model(crate::model::ModelError::NonFiniteGradient(_))
        | ObjectiveError::Match(MatchError::BadMatrix) => true,
        ObjectiveError::Loss(crate::ranking::LossError::DegenerateSpan(w))
        | ObjectiveError::Match(MatchError::DegenerateSpan(w)) => !w.is_finite(),
        _ => false,
    }
}

/// Runs `cfg.epochs` of shuffled mini-batch gradient descent from `init`.
/// `eval` is called after every epoch; its metrics land in the trace.
pub fn train(
    init: ModelParams,
    data: &[TrainSample],
    obj: &ObjectiveConfig,
    cfg: &TrainConfig,
    mut eval: Option<&mut dyn FnMut(&ModelParams) -> BTreeMap<String, f64>>,
    mut trace_out: Option<&mut dyn Write>,
) -> Result<TrainOutcome, TrainError> {
    if data.len() < 2 {
        return Err(TrainError::EmptyTrainSet);
    }
    let mut params = init;
    let mut trace = Vec::with_capacity(cfg.epochs);
    let bsz = cfg.batch.max(2);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng_for(cfg.seed, &["shuffle", &epoch.to_string()]));
        let mut chunks: Vec<Vec<usize>> = order.chunks(bsz).map(|c| c.to_vec()).collect();
        // a trailing singleton cannot draw an in-batch easy negative
        if chunks.len() > 1 && chunks.last().map_or(false, |c| c.len() < 2) {
            let tail = chunks.pop().expect("non-empty");
            chunks.last_mut().expect("non-empty").extend(tail);
        }

        let mut sums: BTreeMap<String, f64> = BTreeMap::new();
        let mut total = 0.0;
        let mut norm_sum = 0.0;
        for (bi, idx) in chunks.iter().enumerate() {
            let batch: Vec<&TrainSample> = idx.iter().map(|&i| &data[i]).collect();
            let easy_seed = derive_seed(cfg.seed, &["easy", &epoch.to_string(), &bi.to_string()]);
            let easy = easy_negatives(&batch, easy_seed);
            let (rep, mut g) = match batch_gradient(&params, &batch, &easy, obj) {
                Ok(x) => x,
                Err(e) if is_divergence(&e) => {
                    return Err(TrainError::DivergedLoss {
                        epoch,
                        batch: bi,
                        last_good: Box::new(params),
                    })
                }
                Err(e) => return Err(e.into()),
            };
            if !rep.total.is_finite() {
                return Err(TrainError::DivergedLoss {
                    epoch,
                    batch: bi,
                    last_good: Box::new(params),
                });
            }
            let n = idx.len() as f64;
            for (k, v) in &rep.terms {
                *sums.entry(k.clone()).or_insert(0.0) += n * v;
            }
            total += n * rep.total;
            let gn = g.norm();
            norm_sum += gn;
            if cfg.clip_norm > 0.0 && gn > cfg.clip_norm {
                g.scale(cfg.clip_norm / gn);
            }
            let mut next = params.clone();
            next.add_scaled(&g, -cfg.lr);
            if next.first_non_finite().is_some() {
                return Err(TrainError::DivergedLoss {
                    epoch,
                    batch: bi,
                    last_good: Box::new(params),
                });
            }
            params = next;
        }
        let count = data.len() as f64;
        let metrics = match eval.as_mut() {
            Some(f) => f(&params),
            None => BTreeMap::new(),
        };
        let rec = EpochRecord {
            epoch,
            total: total / count,
            terms: sums.into_iter().map(|(k, v)| (k, v / count)).collect(),
            grad_norm: norm_sum / chunks.len() as f64,
            metrics,
        };
        if let Some(w) = trace_out.as_mut() {
            writeln!(w, "{}", serde_json::to_string(&rec).expect("trace record serializes"))?;
        }
        trace.push(rec);
    }
    Ok(TrainOutcome { params, trace })
}
