use serde::{Deserialize, Serialize};

use super::{hinge, LossError, LossReport, SaliencyTrack};
use crate::span::ClipSpan;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineMode {
    /// Each level is compared with the next one.
    #[default]
    Relative,
    /// Levels 2..4 are all compared against the first hard negative.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineConfig {
    pub margins: [f64; 4],
    pub mode: FineMode,
    /// Which of the four hinge constraints are active.
    pub use_terms: [bool; 4],
    /// Treat the positive track as a constant when it is the observation.
    pub detach_observation: bool,
}

impl Default for FineConfig {
    fn default() -> Self {
        Self {
            margins: [0.25; 4],
            mode: FineMode::Relative,
            use_terms: [true; 4],
            detach_observation: false,
        }
    }
}

impl FineConfig {
    /// Distance indices `(a, b)` compared by each hinge: `m + d_a - d_b`.
    fn pairs(&self) -> [(usize, usize); 4] {
        match self.mode {
            FineMode::Relative => [(0, 1), (1, 2), (2, 3), (3, 4)],
            FineMode::Absolute => [(0, 1), (1, 2), (1, 3), (1, 4)],
        }
    }
}

/// Binary label: 1 for clips inside `span`, 0 elsewhere.
pub fn pseudo_label(span: ClipSpan, len: usize) -> Result<Vec<f64>, LossError> {
    if span.start >= span.end || span.end > len {
        return Err(LossError::EmptySpan);
    }
    Ok((0..len).map(|i| if span.contains(i) { 1.0 } else { 0.0 }).collect())
}

/// `-(1/T) * sum(y_i * ln(yhat_i))`; clips with `y_i == 0` contribute nothing.
pub fn nll_distance(y: &[f64], yhat: &[f64]) -> Result<f64, LossError> {
    if y.len() != yhat.len() {
        return Err(LossError::LengthMismatch {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    let t = y.len() as f64;
    Ok(-y
        .iter()
        .zip(yhat)
        .filter(|(a, _)| **a != 0.0)
        .map(|(a, b)| a * b.ln())
        .sum::<f64>()
        / t)
}

/// Hinge terms and their per-distance coefficients for a distance vector
/// `(d(Y,S_p), d(S_p,S1), d(S_p,S2), d(S_p,S3), d(S_p,S_n))`.
pub fn fine_from_distances(d: [f64; 5], cfg: &FineConfig) -> ([f64; 4], [f64; 5]) {
    let mut terms = [0.0; 4];
    let mut coef = [0.0; 5];
    for (k, &(a, b)) in cfg.pairs().iter().enumerate() {
        if !cfg.use_terms[k] {
            continue;
        }
        let arg = cfg.margins[k] + d[a] - d[b];
        terms[k] = hinge(arg);
        if arg > 0.0 {
            coef[a] += 1.0;
            coef[b] -= 1.0;
        }
    }
    (terms, coef)
}

pub const FINE_KEYS: [&str; 5] = ["s_p", "s_hn1", "s_hn2", "s_hn3", "s_n"];

/// Four-level hierarchy loss over `[S_p, S1_hn, S2_hn, S3_hn, S_n]` using
/// squashed scores. Gradients are returned with respect to raw scores.
pub fn fine_loss(
    tracks: [&SaliencyTrack; 5],
    span: ClipSpan,
    cfg: &FineConfig,
) -> Result<LossReport, LossError> {
    let t = tracks[0].len();
    for tr in &tracks[1..] {
        if tr.len() != t {
            return Err(LossError::LengthMismatch {
                expected: t,
                got: tr.len(),
            });
        }
    }
    let y = pseudo_label(span, t)?;
    let sp = tracks[0].squashed();
    let mut d = [0.0; 5];
    d[0] = nll_distance(&y, sp)?;
    for j in 1..5 {
        d[j] = nll_distance(sp, tracks[j].squashed())?;
    }
    let (terms, coef) = fine_from_distances(d, cfg);

    let tf = t as f64;
    let mut g_sq = vec![vec![0.0; t]; 5];
    for i in 0..t {
        // d0 = d(Y, s_p)
        g_sq[0][i] += coef[0] * (-y[i] / (tf * sp[i]));
        for j in 1..5 {
            if coef[j] == 0.0 {
                continue;
            }
            let sj = tracks[j].squashed()[i];
            if !cfg.detach_observation {
                g_sq[0][i] += coef[j] * (-sj.ln() / tf);
            }
            g_sq[j][i] += coef[j] * (-sp[i] / (tf * sj));
        }
    }

    let mut rep = LossReport::default();
    for (k, v) in terms.iter().enumerate() {
        if cfg.use_terms[k] {
            rep.set_term(&format!("l{}", k + 1), *v, 1.0);
        }
    }
    for (k, v) in d.iter().enumerate() {
        rep.diagnostic(&format!("d{k}"), *v);
    }
    for (j, key) in FINE_KEYS.iter().enumerate() {
        rep.add_grad(key, &tracks[j].to_raw_grad(&g_sq[j]), 1.0);
    }
    Ok(rep.finish())
}
