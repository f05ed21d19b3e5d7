//! Toy differentiable scorer: clip features + query tokens -> saliency track,
//! moment spans and foreground/background logits, with manual backprop.
//!
//! ```text
//! e      = mean(token_table[tokens])
//! h_t    = tanh(W_s [x_t; e] + b_s)
//! sal_t  = u_s . h_t + c_s
//! a_j    = softmax_t(q_j . h_t)
//! p_j    = sum_t a_jt [h_t; pos_t]         pos_t = (logit u, u, u^2), u = (t + 0.5) / T
//! span_j = logistic(W_span [p_j; e] + b_span)   -> (center, width)
//! cls_j  = W_cls [p_j; e] + b_cls                -> (fg, bg) logits
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcher::MomentPrediction;
use crate::span::NormSpan;
use crate::util::rng_for;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("token id {0} outside vocabulary of {1}")]
    UnknownToken(usize, usize),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Number of positional features appended to each pooled hidden vector.
pub const POS_FEATURES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_v: usize,
    pub d_e: usize,
    pub d_h: usize,
    pub n_queries: usize,
    pub vocab_size: usize,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            d_v: 32,
            d_e: 32,
            d_h: 64,
            n_queries: 5,
            vocab_size,
        }
    }

    /// Width of the span/class head input `[p_j; e]`.
    pub fn head_in(&self) -> usize {
        self.d_h + POS_FEATURES + self.d_e
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// `vocab x d_e`
    pub token_table: Array2<f64>,
    /// `d_h x (d_v + d_e)`
    pub w_s: Array2<f64>,
    pub b_s: Array1<f64>,
    pub u_s: Array1<f64>,
    /// Saliency bias, length 1.
    pub c_s: Array1<f64>,
    /// `N x d_h`
    pub queries: Array2<f64>,
    /// `2 x head_in`
    pub w_span: Array2<f64>,
    pub b_span: Array1<f64>,
    /// `2 x head_in`
    pub w_cls: Array2<f64>,
    pub b_cls: Array1<f64>,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Self {
        let c = config;
        Self {
            config,
            token_table: Array2::zeros((c.vocab_size, c.d_e)),
            w_s: Array2::zeros((c.d_h, c.d_v + c.d_e)),
            b_s: Array1::zeros(c.d_h),
            u_s: Array1::zeros(c.d_h),
            c_s: Array1::zeros(1),
            queries: Array2::zeros((c.n_queries, c.d_h)),
            w_span: Array2::zeros((2, c.head_in())),
            b_span: Array1::zeros(2),
            w_cls: Array2::zeros((2, c.head_in())),
            b_cls: Array1::zeros(2),
        }
    }

    /// Gaussian initialization scaled by fan-in.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = rng_for(seed, &["model", "init"]);
        let c = config;
        let fill = |a: &mut ArrayViewMutD<f64>, std: f64, rng: &mut rand_chacha::ChaCha8Rng| {
            let n = Normal::new(0.0, std).expect("positive std");
            a.mapv_inplace(|_| n.sample(rng));
        };
        let head_std = 1.0 / (c.head_in() as f64).sqrt();
        for (name, mut view) in p.fields_mut() {
            let std = match name {
                "token_table" => 1.0,
                "w_s" => 1.0 / ((c.d_v + c.d_e) as f64).sqrt(),
                "u_s" | "queries" => 1.0 / (c.d_h as f64).sqrt(),
                "w_span" | "w_cls" => head_std,
                _ => continue,
            };
            fill(&mut view, std, &mut rng);
        }
        p
    }

    /// Every parameter array by name, in checkpoint order.
    pub fn fields(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        vec![
            ("token_table", self.token_table.view().into_dyn()),
            ("w_s", self.w_s.view().into_dyn()),
            ("b_s", self.b_s.view().into_dyn()),
            ("u_s", self.u_s.view().into_dyn()),
            ("c_s", self.c_s.view().into_dyn()),
            ("queries", self.queries.view().into_dyn()),
            ("w_span", self.w_span.view().into_dyn()),
            ("b_span", self.b_span.view().into_dyn()),
            ("w_cls", self.w_cls.view().into_dyn()),
            ("b_cls", self.b_cls.view().into_dyn()),
        ]
    }

    pub fn fields_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        vec![
            ("token_table", self.token_table.view_mut().into_dyn()),
            ("w_s", self.w_s.view_mut().into_dyn()),
            ("b_s", self.b_s.view_mut().into_dyn()),
            ("u_s", self.u_s.view_mut().into_dyn()),
            ("c_s", self.c_s.view_mut().into_dyn()),
            ("queries", self.queries.view_mut().into_dyn()),
            ("w_span", self.w_span.view_mut().into_dyn()),
            ("b_span", self.b_span.view_mut().into_dyn()),
            ("w_cls", self.w_cls.view_mut().into_dyn()),
            ("b_cls", self.b_cls.view_mut().into_dyn()),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.fields().iter().map(|(_, v)| v.len()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.fields()
            .iter()
            .flat_map(|(_, v)| v.iter().copied().collect::<Vec<_>>())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for ((_, mut a), (_, b)) in self.fields_mut().into_iter().zip(other.fields()) {
            Zip::from(&mut a).and(&b).for_each(|x, y| *x += scale * y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, mut a) in self.fields_mut() {
            a.mapv_inplace(|x| x * s);
        }
    }

    /// Name of the first array holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.fields()
            .into_iter()
            .find(|(_, v)| v.iter().any(|x| !x.is_finite()))
            .map(|(n, _)| n)
    }

    /// Writes a versioned text checkpoint: a header line, the config, then
    /// one `name shape...` line followed by the values of each array.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{CHECKPOINT_MAGIC}")?;
        writeln!(out, "{}", serde_json::to_string(&self.config).expect("config serializes"))?;
        for (name, v) in self.fields() {
            let shape: Vec<String> = v.shape().iter().map(|d| d.to_string()).collect();
            writeln!(out, "{name} {}", shape.join(" "))?;
            // {:?} prints the shortest representation that round-trips exactly
            let vals: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            writeln!(out, "{}", vals.join(" "))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let mut next = || -> Result<String, ModelError> {
            lines
                .next()
                .ok_or_else(|| ModelError::Checkpoint("truncated file".into()))?
                .map_err(ModelError::from)
        };
        if next()? != CHECKPOINT_MAGIC {
            return Err(ModelError::Checkpoint("unknown header".into()));
        }
        let config: ModelConfig = serde_json::from_str(&next()?)
            .map_err(|e| ModelError::Checkpoint(format!("config: {e}")))?;
        let mut p = Self::zeros(config);
        for (name, mut view) in p.fields_mut() {
            let head = next()?;
            let mut parts = head.split_whitespace();
            if parts.next() != Some(name) {
                return Err(ModelError::Checkpoint(format!("expected array {name}")));
            }
            let shape: Vec<usize> = parts
                .map(|d| d.parse().map_err(|_| ModelError::Checkpoint(format!("{name}: shape"))))
                .collect::<Result<_, _>>()?;
            if shape != view.shape() {
                return Err(ModelError::ShapeMismatch(format!(
                    "{name}: file {shape:?}, config {:?}",
                    view.shape()
                )));
            }
            let body = next()?;
            let vals: Vec<f64> = body
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| ModelError::Checkpoint(format!("{name}: value {x}"))))
                .collect::<Result<_, _>>()?;
            if vals.len() != view.len() {
                return Err(ModelError::Checkpoint(format!("{name}: {} values", vals.len())));
            }
            for (dst, v) in view.iter_mut().zip(vals) {
                *dst = v;
            }
        }
        Ok(p)
    }
}

pub const CHECKPOINT_MAGIC: &str = "salrank-checkpoint v1";

/// Video-side projection shared by every query on the same clips.
pub struct VideoEncoding<'a> {
    pub features: ArrayView2<'a, f64>,
    /// `T x d_h`: `W_s[:, :d_v] x_t` for each clip.
    xw: Array2<f64>,
    /// `T x POS_FEATURES`
    pos: Array2<f64>,
}

pub fn positional_features(t: usize) -> Array2<f64> {
    Array2::from_shape_fn((t, POS_FEATURES), |(i, k)| {
        let u = (i as f64 + 0.5) / t as f64;
        match k {
            0 => (u / (1.0 - u)).ln(),
            1 => u,
            _ => u * u,
        }
    })
}

pub fn encode_video<'a>(
    params: &ModelParams,
    features: ArrayView2<'a, f64>,
) -> Result<VideoEncoding<'a>, ModelError> {
    let c = &params.config;
    if features.ncols() != c.d_v || features.nrows() < 2 {
        return Err(ModelError::ShapeMismatch(format!(
            "clip features {:?}, expected T >= 2 by {}",
            features.shape(),
            c.d_v
        )));
    }
    let wx = params.w_s.slice(s![.., ..c.d_v]);
    Ok(VideoEncoding {
        xw: features.dot(&wx.t()),
        pos: positional_features(features.nrows()),
        features,
    })
}

/// Activations of one (video, query) pass needed by backward.
#[derive(Debug, Clone)]
pub struct QueryPass {
    pub tokens: Vec<usize>,
    pub e: Array1<f64>,
    /// `T x d_h`
    pub h: Array2<f64>,
    pub saliency: Vec<f64>,
    pub moments: Option<MomentCache>,
}

#[derive(Debug, Clone)]
pub struct MomentCache {
    /// `N x T`
    pub attn: Array2<f64>,
    /// `N x head_in`: rows are `[p_j; e]`
    pub z: Array2<f64>,
    /// `N x 2`: logistic (center, width)
    pub span: Array2<f64>,
    /// `N x 2`
    pub logits: Array2<f64>,
}

impl QueryPass {
    pub fn predictions(&self) -> Vec<MomentPrediction> {
        let m = self.moments.as_ref().expect("moment heads were evaluated");
        (0..m.span.nrows())
            .map(|j| {
                let l = m.logits.row(j);
                let mx = l[0].max(l[1]);
                let (a, b) = ((l[0] - mx).exp(), (l[1] - mx).exp());
                MomentPrediction {
                    span: NormSpan::new(m.span[[j, 0]], m.span[[j, 1]]),
                    class_probs: [a / (a + b), b / (a + b)],
                }
            })
            .collect()
    }

    pub fn logits(&self) -> Vec<[f64; 2]> {
        let m = self.moments.as_ref().expect("moment heads were evaluated");
        m.logits.rows().into_iter().map(|r| [r[0], r[1]]).collect()
    }
}

fn embed(params: &ModelParams, tokens: &[usize]) -> Result<Array1<f64>, ModelError> {
    let v = params.config.vocab_size;
    if tokens.is_empty() {
        return Err(ModelError::ShapeMismatch("empty token list".into()));
    }
    let mut e = Array1::zeros(params.config.d_e);
    for &t in tokens {
        if t >= v {
            return Err(ModelError::UnknownToken(t, v));
        }
        e += &params.token_table.row(t);
    }
    e /= tokens.len() as f64;
    Ok(e)
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One query over an encoded video. Moment heads are evaluated only when
/// `with_moments` is set.
pub fn run_query(
    params: &ModelParams,
    video: &VideoEncoding<'_>,
    tokens: &[usize],
    with_moments: bool,
) -> Result<QueryPass, ModelError> {
    let c = &params.config;
    let e = embed(params, tokens)?;
    let we = params.w_s.slice(s![.., c.d_v..]).dot(&e) + &params.b_s;
    let mut h = video.xw.clone();
    h += &we.view().insert_axis(Axis(0));
    h.mapv_inplace(f64::tanh);
    let saliency: Vec<f64> = h.dot(&params.u_s).iter().map(|s| s + params.c_s[0]).collect();

    let moments = if with_moments {
        let t = h.nrows();
        let mut attn = params.queries.dot(&h.t());
        for mut row in attn.rows_mut() {
            let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|x| (x - mx).exp());
            let sum = row.sum();
            row /= sum;
        }
        let n = c.n_queries;
        let mut z = Array2::zeros((n, c.head_in()));
        z.slice_mut(s![.., ..c.d_h]).assign(&attn.dot(&h));
        z.slice_mut(s![.., c.d_h..c.d_h + POS_FEATURES]).assign(&attn.dot(&video.pos));
        for mut row in z.rows_mut() {
            row.slice_mut(s![c.d_h + POS_FEATURES..]).assign(&e);
        }
        debug_assert_eq!(attn.ncols(), t);
        let mut span = z.dot(&params.w_span.t()) + &params.b_span.view().insert_axis(Axis(0));
        span.mapv_inplace(logistic);
        let logits = z.dot(&params.w_cls.t()) + &params.b_cls.view().insert_axis(Axis(0));
        Some(MomentCache {
            attn,
            z,
            span,
            logits,
        })
    } else {
        None
    };
    Ok(QueryPass {
        tokens: tokens.to_vec(),
        e,
        h,
        saliency,
        moments,
    })
}

/// Outputs of a full forward pass on one (video, query) pair.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub saliency: Vec<f64>,
    pub predictions: Vec<MomentPrediction>,
    pub cache: QueryPass,
}

pub fn forward(
    params: &ModelParams,
    clip_features: ArrayView2<'_, f64>,
    token_ids: &[usize],
) -> Result<ForwardOutput, ModelError> {
    let video = encode_video(params, clip_features)?;
    let cache = run_query(params, &video, token_ids, true)?;
    Ok(ForwardOutput {
        saliency: cache.saliency.clone(),
        predictions: cache.predictions(),
        cache,
    })
}

/// Upstream gradients for one pass.
#[derive(Debug, Clone, Default)]
pub struct PassGrads {
    /// d loss / d raw saliency, length T.
    pub saliency: Vec<f64>,
    /// d loss / d (center, width) per moment query.
    pub span: Option<Array2<f64>>,
    /// d loss / d logits per moment query.
    pub logits: Option<Array2<f64>>,
}

/// Accumulates parameter gradients of one pass into `grads`; the video-side
/// part is summed into `d_xw` and applied by [`finish_video`].
pub fn backward_query(
    params: &ModelParams,
    video: &VideoEncoding<'_>,
    pass: &QueryPass,
    up: &PassGrads,
    grads: &mut ModelParams,
    d_xw: &mut Array2<f64>,
) {
    let c = &params.config;
    let h = &pass.h;
    let g_sal = ArrayView1::from(&up.saliency[..]);

    grads.u_s += &h.t().dot(&g_sal);
    grads.c_s[0] += g_sal.sum();
    let mut dh = Array2::zeros(h.raw_dim());
    Zip::from(dh.rows_mut())
        .and(&g_sal)
        .for_each(|mut row, &g| row.scaled_add(g, &params.u_s));

    let mut de = Array1::<f64>::zeros(c.d_e);
    if let Some(m) = &pass.moments {
        let n = c.n_queries;
        let mut dz = Array2::<f64>::zeros((n, c.head_in()));
        if let Some(gs) = &up.span {
            let dpre = gs * &m.span.mapv(|s| s * (1.0 - s));
            grads.w_span += &dpre.t().dot(&m.z);
            grads.b_span += &dpre.sum_axis(Axis(0));
            dz += &dpre.dot(&params.w_span);
        }
        if let Some(gl) = &up.logits {
            grads.w_cls += &gl.t().dot(&m.z);
            grads.b_cls += &gl.sum_axis(Axis(0));
            dz += &gl.dot(&params.w_cls);
        }
        de += &dz.slice(s![.., c.d_h + POS_FEATURES..]).sum_axis(Axis(0));
        let dp_h = dz.slice(s![.., ..c.d_h]);
        let dp_pos = dz.slice(s![.., c.d_h..c.d_h + POS_FEATURES]);
        // d attn_jt = dp_j . [h_t; pos_t]
        let da = dp_h.dot(&h.t()) + dp_pos.dot(&video.pos.t());
        dh += &m.attn.t().dot(&dp_h);
        let mut dl = da.clone();
        for (mut row, (a, da_row)) in dl.rows_mut().into_iter().zip(m.attn.rows().into_iter().zip(da.rows())) {
            let dot = a.dot(&da_row);
            Zip::from(&mut row).and(&a).for_each(|x, &aj| *x = aj * (*x - dot));
        }
        grads.queries += &dl.dot(h);
        dh += &dl.t().dot(&params.queries);
    }

    let dpre = dh * &h.mapv(|v| 1.0 - v * v);
    *d_xw += &dpre;
    let col = dpre.sum_axis(Axis(0));
    grads.b_s += &col;
    {
        let mut dwe = grads.w_s.slice_mut(s![.., c.d_v..]);
        for (i, &g) in col.iter().enumerate() {
            dwe.row_mut(i).scaled_add(g, &pass.e);
        }
    }
    de += &params.w_s.slice(s![.., c.d_v..]).t().dot(&col);

    let inv = 1.0 / pass.tokens.len() as f64;
    for &t in &pass.tokens {
        grads.token_table.row_mut(t).scaled_add(inv, &de);
    }
}

/// Applies the summed video-side gradient `d_xw` to `W_s[:, :d_v]`.
pub fn finish_video(video: &VideoEncoding<'_>, d_xw: &Array2<f64>, grads: &mut ModelParams) {
    let d_v = video.features.ncols();
    let mut dwx = grads.w_s.slice_mut(s![.., ..d_v]);
    dwx += &d_xw.t().dot(&video.features);
}

/// Draws a random parameter perturbation direction; used by tests and
/// diagnostics.
pub fn random_like(p: &ModelParams, rng: &mut impl Rng, std: f64) -> ModelParams {
    let mut out = ModelParams::zeros(p.config);
    let n = Normal::new(0.0, std).expect("positive std");
    for (_, mut v) in out.fields_mut() {
        v.mapv_inplace(|_| n.sample(rng));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelParams {
        ModelParams::init(
            ModelConfig {
                d_v: 4,
                d_e: 4,
                d_h: 8,
                n_queries: 2,
                vocab_size: 6,
            },
            1,
        )
    }

    fn feats(t: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((t, d), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.5)
    }

    #[test]
    fn shapes_and_ranges() {
        let p = tiny();
        let x = feats(2, 4);
        let out = forward(&p, x.view(), &[0, 1]).unwrap();
        assert_eq!(out.saliency.len(), 2);
        assert_eq!(out.predictions.len(), 2);
        for pr in &out.predictions {
            assert!(pr.span.width > 0.0 && pr.span.width < 1.0);
            assert!((pr.class_probs[0] + pr.class_probs[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_clips_get_identical_saliency() {
        let p = tiny();
        let mut x = feats(5, 4);
        let r = x.row(1).to_owned();
        x.row_mut(3).assign(&r);
        let out = forward(&p, x.view(), &[2]).unwrap();
        assert_eq!(out.saliency[1], out.saliency[3]);
    }

    #[test]
    fn duplicate_token_shifts_mean() {
        let p = tiny();
        let a = embed(&p, &[0, 1]).unwrap();
        let b = embed(&p, &[0, 1, 1]).unwrap();
        let want = (&p.token_table.row(0) + &(2.0 * &p.token_table.row(1))) / 3.0;
        assert!((&b - &want).iter().all(|d| d.abs() < 1e-12));
        assert_ne!(a, b);
    }

    #[test]
    fn errors() {
        let p = tiny();
        assert!(matches!(forward(&p, feats(1, 4).view(), &[0]), Err(ModelError::ShapeMismatch(_))));
        assert!(matches!(forward(&p, feats(3, 5).view(), &[0]), Err(ModelError::ShapeMismatch(_))));
        assert!(matches!(forward(&p, feats(3, 4).view(), &[9]), Err(ModelError::UnknownToken(9, 6))));
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let p = tiny();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.txt");
        p.save(&path).unwrap();
        let q = ModelParams::load(&path).unwrap();
        assert_eq!(p, q);
        let x = feats(6, 4);
        let a = forward(&p, x.view(), &[1, 2, 3]).unwrap();
        let b = forward(&q, x.view(), &[1, 2, 3]).unwrap();
        assert_eq!(a.saliency, b.saliency);
        assert_eq!(a.predictions, b.predictions);
    }
}
