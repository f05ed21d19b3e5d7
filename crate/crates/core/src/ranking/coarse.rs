use serde::{Deserialize, Serialize};

use super::{hinge, LossError, LossReport, SaliencyTrack};
use crate::span::ClipSpan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseConfig {
    /// Intra-video margin.
    pub h1: f64,
    /// Inter-query margin.
    pub h2: f64,
    /// Selection-ratio factor for top-k pooling.
    pub q: usize,
    pub use_intra: bool,
    pub use_inter: bool,
}

impl Default for CoarseConfig {
    fn default() -> Self {
        Self {
            h1: 1.0,
            h2: 2.0,
            q: 8,
            use_intra: true,
            use_inter: true,
        }
    }
}

/// Top-k mean of in-span scores and the clips that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub value: f64,
    pub k: usize,
    pub indices: Vec<usize>,
}

fn check_span(span: ClipSpan, len: usize) -> Result<(), LossError> {
    if span.start >= span.end || span.end > len {
        return Err(LossError::EmptySpan);
    }
    Ok(())
}

/// Mean of the `k = max(1, floor(T+ / q))` largest scores inside `span`.
/// Ties are taken in clip order.
pub fn pooled_pos(scores: &[f64], span: ClipSpan, q: usize) -> Result<Pooled, LossError> {
    check_span(span, scores.len())?;
    let inside = span.len();
    let k = (inside / q.max(1)).max(1);
    let mut idx: Vec<usize> = (span.start..span.end).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    let value = idx.iter().map(|&i| scores[i]).sum::<f64>() / k as f64;
    Ok(Pooled {
        value,
        k,
        indices: idx,
    })
}

/// Largest score outside `span` and its clip index (first on ties).
pub fn max_outside(scores: &[f64], span: ClipSpan) -> Result<(f64, usize), LossError> {
    check_span(span, scores.len())?;
    (0..scores.len())
        .filter(|&i| !span.contains(i))
        .fold(None, |best: Option<(f64, usize)>, i| match best {
            Some((v, _)) if v >= scores[i] => best,
            _ => Some((scores[i], i)),
        })
        .ok_or(LossError::NoOutsideClips)
}

/// `max(0, h1 + S-_p - S+_p) + max(0, h2 + S+_n - S+_p)` on raw scores.
///
/// When the span covers the whole video the intra term is skipped and the
/// diagnostic `intra_skipped` is set to 1.
pub fn coarse_loss(
    s_p: &SaliencyTrack,
    s_n: &SaliencyTrack,
    span: ClipSpan,
    cfg: &CoarseConfig,
) -> Result<LossReport, LossError> {
    let t = s_p.len();
    if s_n.len() != t {
        return Err(LossError::LengthMismatch {
            expected: t,
            got: s_n.len(),
        });
    }
    let pos = pooled_pos(s_p.raw(), span, cfg.q)?;
    let mut g_p = vec![0.0; t];
    let mut g_n = vec![0.0; t];
    let mut rep = LossReport::default();
    let kinv = 1.0 / pos.k as f64;

    if cfg.use_intra {
        match max_outside(s_p.raw(), span) {
            Ok((out_max, out_idx)) => {
                let arg = cfg.h1 + out_max - pos.value;
                rep.set_term("intra", hinge(arg), 1.0);
                if arg > 0.0 {
                    g_p[out_idx] += 1.0;
                    for &i in &pos.indices {
                        g_p[i] -= kinv;
                    }
                }
            }
            Err(LossError::NoOutsideClips) => {
                rep.set_term("intra", 0.0, 1.0);
                rep.diagnostic("intra_skipped", 1.0);
            }
            Err(e) => return Err(e),
        }
    }
    if cfg.use_inter {
        let neg = pooled_pos(s_n.raw(), span, cfg.q)?;
        let arg = cfg.h2 + neg.value - pos.value;
        rep.set_term("inter", hinge(arg), 1.0);
        if arg > 0.0 {
            for &i in &neg.indices {
                g_n[i] += kinv;
            }
            for &i in &pos.indices {
                g_p[i] -= kinv;
            }
        }
    }
    rep.add_grad("s_p", &g_p, 1.0);
    rep.add_grad("s_n", &g_n, 1.0);
    Ok(rep.finish())
}
