use serde::{Deserialize, Serialize};

use super::{LossError, LossReport, SaliencyTrack};
use crate::span::NormSpan;

/// Weights of the set-prediction base loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseLossConfig {
    pub l1: f64,
    pub giou: f64,
    pub cls: f64,
    pub neg: f64,
    pub cont: f64,
    /// Softmax temperature of the contrastive rank loss.
    pub tau: f64,
    /// Maximum rank level of the contrastive rank loss.
    pub max_rank: usize,
}

impl Default for BaseLossConfig {
    fn default() -> Self {
        Self {
            l1: 10.0,
            giou: 1.0,
            cls: 4.0,
            neg: 1.0,
            cont: 1.0,
            tau: 0.5,
            max_rank: 1,
        }
    }
}

/// Generalized IoU of two `(start, end)` intervals.
pub fn giou_1d(a: (f64, f64), b: (f64, f64)) -> f64 {
    giou_1d_with_grad(a, b).0
}

/// GIoU and its partials `[d/da_s, d/da_e, d/db_s, d/db_e]`.
pub fn giou_1d_with_grad(a: (f64, f64), b: (f64, f64)) -> (f64, [f64; 4]) {
    let (a_s, a_e) = a;
    let (b_s, b_e) = b;
    let raw_inter = a_e.min(b_e) - a_s.max(b_s);
    let inter = raw_inter.max(0.0);
    let union = (a_e - a_s) + (b_e - b_s) - inter;
    let hull = a_e.max(b_e) - a_s.min(b_s);
    let g = inter / union - 1.0 + union / hull;

    // partials of inter, union length terms and hull w.r.t. [a_s, a_e, b_s, b_e]
    let mut d_inter = [0.0; 4];
    if raw_inter > 0.0 {
        if a_e <= b_e {
            d_inter[1] = 1.0;
        } else {
            d_inter[3] = 1.0;
        }
        if a_s >= b_s {
            d_inter[0] = -1.0;
        } else {
            d_inter[2] = -1.0;
        }
    }
    let d_len = [-1.0, 1.0, -1.0, 1.0];
    let mut d_hull = [0.0; 4];
    if a_e >= b_e {
        d_hull[1] = 1.0;
    } else {
        d_hull[3] = 1.0;
    }
    if a_s <= b_s {
        d_hull[0] = -1.0;
    } else {
        d_hull[2] = -1.0;
    }
    let mut grad = [0.0; 4];
    for k in 0..4 {
        let d_union = d_len[k] - d_inter[k];
        grad[k] = (d_inter[k] * union - inter * d_union) / (union * union)
            + (d_union * hull - union * d_hull[k]) / (hull * hull);
    }
    (g, grad)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `l1 * (|dc| + |dw|) + giou * (1 - GIoU)` between a ground-truth and a
/// predicted normalized span. Gradients under `pred_span` and `gt_span`,
/// each as `[d/center, d/width]`.
pub fn span_loss(
    gt: NormSpan,
    pred: NormSpan,
    cfg: &BaseLossConfig,
) -> Result<LossReport, LossError> {
    for s in [gt, pred] {
        if !(s.width > 0.0) {
            return Err(LossError::DegenerateSpan(s.width));
        }
    }
    let dc = pred.center - gt.center;
    let dw = pred.width - gt.width;
    let l1 = dc.abs() + dw.abs();
    let (g, dg) = giou_1d_with_grad((gt.start(), gt.end()), (pred.start(), pred.end()));

    // (start, end) = (c - w/2, c + w/2)
    let to_cw = |ds: f64, de: f64| [ds + de, 0.5 * (de - ds)];
    let giou_gt = to_cw(-dg[0], -dg[1]);
    let giou_pred = to_cw(-dg[2], -dg[3]);

    let mut rep = LossReport::default();
    rep.set_term("l1", l1, cfg.l1);
    rep.set_term("giou", 1.0 - g, cfg.giou);
    let (sc, sw) = (sign(dc), sign(dw));
    rep.add_grad(
        "pred_span",
        &[cfg.l1 * sc + cfg.giou * giou_pred[0], cfg.l1 * sw + cfg.giou * giou_pred[1]],
        1.0,
    );
    rep.add_grad(
        "gt_span",
        &[-cfg.l1 * sc + cfg.giou * giou_gt[0], -cfg.l1 * sw + cfg.giou * giou_gt[1]],
        1.0,
    );
    Ok(rep.finish())
}

/// Mean over clips of `-ln(1 - s_t)` on the squashed view; gradient under
/// `s_neg` with respect to raw scores.
pub fn neg_pair_loss(track: &SaliencyTrack) -> LossReport {
    let t = track.len() as f64;
    let s = track.squashed();
    let value = s.iter().map(|x| -(1.0 - x).ln()).sum::<f64>() / t;
    let g_sq: Vec<f64> = s.iter().map(|x| 1.0 / ((1.0 - x) * t)).collect();
    let mut rep = LossReport::default();
    rep.set_term("neg", value, 1.0);
    rep.add_grad("s_neg", &track.to_raw_grad(&g_sq), 1.0);
    rep.finish()
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `-sum_r ln( sum_{rank >= r} e^{S/tau} / sum_all e^{S/tau} )` for
/// `r = 1..=max_rank`, on raw scores. Levels with an empty positive or
/// negative side are skipped and counted in the `skipped_levels` diagnostic.
pub fn contrastive_rank_loss(
    scores: &[f64],
    ranks: &[usize],
    tau: f64,
    max_rank: usize,
) -> Result<LossReport, LossError> {
    if scores.len() != ranks.len() {
        return Err(LossError::LengthMismatch {
            expected: scores.len(),
            got: ranks.len(),
        });
    }
    let z: Vec<f64> = scores.iter().map(|s| s / tau).collect();
    let mut grad = vec![0.0; scores.len()];
    let mut rep = LossReport::default();
    let mut skipped = 0;
    for r in 1..=max_rank {
        let pos: Vec<usize> = (0..z.len()).filter(|&i| ranks[i] >= r).collect();
        if pos.is_empty() || pos.len() == z.len() {
            skipped += 1;
            continue;
        }
        let lse_pos = log_sum_exp(pos.iter().map(|&i| z[i]));
        let lse_all = log_sum_exp(z.iter().copied());
        rep.set_term(&format!("r{r}"), lse_all - lse_pos, 1.0);
        for i in 0..z.len() {
            grad[i] += (z[i] - lse_all).exp() / tau;
        }
        for &i in &pos {
            grad[i] -= (z[i] - lse_pos).exp() / tau;
        }
    }
    rep.diagnostic("skipped_levels", skipped as f64);
    rep.add_grad("scores", &grad, 1.0);
    Ok(rep.finish())
}

/// `sum_i -ln softmax(logits_i)[target_i]` over two-way (foreground,
/// background) logits; gradient under `cls_logits`, flattened row-major.
pub fn class_nll(logits: &[[f64; 2]], targets: &[usize]) -> Result<LossReport, LossError> {
    if logits.len() != targets.len() {
        return Err(LossError::LengthMismatch {
            expected: logits.len(),
            got: targets.len(),
        });
    }
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(2 * logits.len());
    for (l, &c) in logits.iter().zip(targets) {
        let lse = log_sum_exp(l.iter().copied());
        value += lse - l[c];
        for (k, lk) in l.iter().enumerate() {
            let p = (lk - lse).exp();
            grad.push(if k == c { p - 1.0 } else { p });
        }
    }
    let mut rep = LossReport::default();
    rep.set_term("cls", value, 1.0);
    rep.add_grad("cls_logits", &grad, 1.0);
    Ok(rep.finish())
}
