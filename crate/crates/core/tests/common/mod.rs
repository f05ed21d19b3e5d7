//! Oracles and checkers shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use salrank::corpus::Split;
use salrank::forge::{
    build_hierarchy, forge_lexicon_hierarchy, token_diff, ChatEndpoint, EndpointError, Weighting,
};
use salrank::forge::llm::ChatRequest;
use salrank::matcher::solve;
use salrank::model::{ModelConfig, ModelParams};
use salrank::objective::{sample_objective, ObjectiveConfig, TrainSample};
use salrank::ranking::{
    class_nll, coarse_loss, combine, contrastive_rank_loss, fine_loss, giou_1d_with_grad,
    max_outside, neg_pair_loss, nll_distance, pooled_pos, pseudo_label, span_loss,
    BaseLossConfig, CoarseConfig, FineConfig, FineMode, SaliencyTrack, WeightedTerm,
    SALIENCY_TERM,
};
use salrank::span::{ClipSpan, NormSpan};
use salrank::synth::{gen_corpus, SynthConfig};
use salrank::tagger::{build_dictionary, Lexicon, Tag, TaggedQuery};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- gradients

pub const FD_STEP: f64 = 1e-5;
pub const KINK_GAP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct FdStats {
    pub op: &'static str,
    pub checked: usize,
    pub attempts: usize,
    pub max_rel: f64,
}

impl FdStats {
    pub fn passed(&self, trials: usize, tol: f64) -> bool {
        self.checked >= trials && self.max_rel < tol
    }
}

/// Relative error between central differences of `f` at `x` and `analytic`,
/// or `None` when a coordinate looks non-smooth at this step.
pub fn fd_rel_err(f: &dyn Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> Option<f64> {
    let f0 = f(x);
    let mut fd = vec![0.0; x.len()];
    let mut y = x.to_vec();
    for i in 0..x.len() {
        y[i] = x[i] + FD_STEP;
        let fp = f(&y);
        y[i] = x[i] - FD_STEP;
        let fm = f(&y);
        y[i] = x[i];
        if ((fp - f0) - (f0 - fm)).abs() > 1e-7 * (1.0 + f0.abs()) {
            return None;
        }
        fd[i] = (fp - fm) / (2.0 * FD_STEP);
    }
    let diff: f64 = fd.iter().zip(analytic).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let na = fd.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nb);
    Some(if scale < 1e-12 { diff } else { diff / scale })
}

/// Draws inputs until `trials` smooth points have been checked.
fn run_op(
    op: &'static str,
    trials: usize,
    seed: u64,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> Option<(Vec<f64>, Box<dyn Fn(&[f64]) -> (f64, Vec<f64>)>)>,
) -> FdStats {
    let mut r = rng(seed);
    let mut st = FdStats { op, checked: 0, attempts: 0, max_rel: 0.0 };
    while st.checked < trials && st.attempts < 50 * trials {
        st.attempts += 1;
        let Some((x, f)) = draw(&mut r) else { continue };
        let (_, g) = f(&x);
        let value = |y: &[f64]| f(y).0;
        if let Some(e) = fd_rel_err(&value, &x, &g) {
            st.max_rel = st.max_rel.max(e);
            st.checked += 1;
        }
    }
    st
}

fn random_track(r: &mut impl Rng, t: usize) -> Vec<f64> {
    (0..t).map(|_| r.gen_range(-3.0..3.0)).collect()
}

fn random_span(r: &mut impl Rng, t: usize) -> ClipSpan {
    let len = r.gen_range(1..t);
    let start = r.gen_range(0..=t - len);
    ClipSpan { start, end: start + len }
}

/// True when the top-k selection inside `span` is separated from the rest by `KINK_GAP`.
fn pooling_is_smooth(s: &[f64], span: ClipSpan, q: usize) -> bool {
    let mut inside: Vec<f64> = (span.start..span.end).map(|i| s[i]).collect();
    inside.sort_by(|a, b| b.total_cmp(a));
    let k = (inside.len() / q).max(1);
    k == inside.len() || inside[k - 1] - inside[k] > KINK_GAP
}

fn max_is_unique(s: &[f64], span: ClipSpan) -> bool {
    let mut out: Vec<f64> = (0..s.len()).filter(|&i| !span.contains(i)).map(|i| s[i]).collect();
    out.sort_by(|a, b| b.total_cmp(a));
    out.len() < 2 || out[0] - out[1] > KINK_GAP
}

fn coarse_args(sp: &[f64], sn: &[f64], span: ClipSpan, c: &CoarseConfig) -> [f64; 2] {
    let p = pooled_pos(sp, span, c.q).unwrap().value;
    let n = pooled_pos(sn, span, c.q).unwrap().value;
    let out = max_outside(sp, span).map(|(v, _)| v).unwrap_or(f64::NEG_INFINITY);
    [c.h1 + out - p, c.h2 + n - p]
}

fn fine_args(tracks: &[SaliencyTrack; 5], span: ClipSpan, cfg: &FineConfig) -> [f64; 4] {
    let y = pseudo_label(span, tracks[0].len()).unwrap();
    let sp = tracks[0].squashed();
    let mut d = [nll_distance(&y, sp).unwrap(), 0.0, 0.0, 0.0, 0.0];
    for j in 1..5 {
        d[j] = nll_distance(sp, tracks[j].squashed()).unwrap();
    }
    let pairs = match cfg.mode {
        FineMode::Relative => [(0, 1), (1, 2), (2, 3), (3, 4)],
        FineMode::Absolute => [(0, 1), (1, 2), (1, 3), (1, 4)],
    };
    [0, 1, 2, 3].map(|k| cfg.margins[k] + d[pairs[k].0] - d[pairs[k].1])
}

fn split_tracks(x: &[f64], n: usize) -> Vec<SaliencyTrack> {
    let t = x.len() / n;
    (0..n).map(|k| SaliencyTrack::new(x[k * t..(k + 1) * t].to_vec())).collect()
}

fn concat_grads(rep: &salrank::ranking::LossReport, keys: &[&[&str]], t: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(keys.len() * t);
    for ks in keys {
        let mut g = vec![0.0; t];
        for k in *ks {
            if let Some(v) = rep.grad(k) {
                for (a, b) in g.iter_mut().zip(v) {
                    *a += b;
                }
            }
        }
        out.extend(g);
    }
    out
}

pub fn fd_coarse(trials: usize) -> FdStats {
    run_op("coarse_loss", trials, 11, |r| {
        let t = r.gen_range(4..=20);
        let span = random_span(r, t);
        let cfg = CoarseConfig { q: [1, 2, 4, 8][r.gen_range(0..4)], ..Default::default() };
        let x: Vec<f64> = random_track(r, 2 * t);
        let (sp, sn) = x.split_at(t);
        let args = coarse_args(sp, sn, span, &cfg);
        if args.iter().any(|a| a.abs() < KINK_GAP)
            || !pooling_is_smooth(sp, span, cfg.q)
            || !pooling_is_smooth(sn, span, cfg.q)
            || !max_is_unique(sp, span)
        {
            return None;
        }
        Some((
            x,
            Box::new(move |y: &[f64]| {
                let tr = split_tracks(y, 2);
                let rep = coarse_loss(&tr[0], &tr[1], span, &cfg).unwrap();
                (rep.total, concat_grads(&rep, &[&["s_p"], &["s_n"]], t))
            }),
        ))
    })
}

pub fn fd_fine(trials: usize, mode: FineMode) -> FdStats {
    let name = match mode {
        FineMode::Relative => "fine_loss (relative)",
        FineMode::Absolute => "fine_loss (absolute)",
    };
    run_op(name, trials, 12, move |r| {
        let t = r.gen_range(3..=16);
        let span = random_span(r, t);
        let cfg = FineConfig { mode, ..Default::default() };
        let x = random_track(r, 5 * t);
        let tr: [SaliencyTrack; 5] = split_tracks(&x, 5).try_into().unwrap();
        if fine_args(&tr, span, &cfg).iter().any(|a| a.abs() < KINK_GAP) {
            return None;
        }
        Some((
            x,
            Box::new(move |y: &[f64]| {
                let tr = split_tracks(y, 5);
                let rep = fine_loss([&tr[0], &tr[1], &tr[2], &tr[3], &tr[4]], span, &cfg).unwrap();
                let keys: [&[&str]; 5] = [&["s_p"], &["s_hn1"], &["s_hn2"], &["s_hn3"], &["s_n"]];
                (rep.total, concat_grads(&rep, &keys, t))
            }),
        ))
    })
}

pub fn fd_span(trials: usize) -> FdStats {
    run_op("span_loss", trials, 13, |r| {
        let x: Vec<f64> = (0..2)
            .flat_map(|_| [r.gen_range(0.2..0.8), r.gen_range(0.05..0.4)])
            .collect();
        let (g, p) = (NormSpan::new(x[0], x[1]), NormSpan::new(x[2], x[3]));
        let ends = [g.start(), g.end(), p.start(), p.end()];
        let near = |a: f64, b: f64| (a - b).abs() < KINK_GAP;
        if near(x[0], x[2]) || near(x[1], x[3]) || (0..4).any(|i| (i + 1..4).any(|j| near(ends[i], ends[j]))) {
            return None;
        }
        let cfg = BaseLossConfig::default();
        Some((
            x,
            Box::new(move |y: &[f64]| {
                let rep = span_loss(NormSpan::new(y[0], y[1]), NormSpan::new(y[2], y[3]), &cfg).unwrap();
                let mut g = rep.grad("gt_span").unwrap().to_vec();
                g.extend(rep.grad("pred_span").unwrap());
                (rep.total, g)
            }),
        ))
    })
}

pub fn fd_giou(trials: usize) -> FdStats {
    run_op("giou_1d", trials, 14, |r| {
        let a0: f64 = r.gen_range(0.0..1.0);
        let b0: f64 = r.gen_range(0.0..1.0);
        let x: Vec<f64> = vec![a0, a0 + r.gen_range(0.05..0.6), b0, b0 + r.gen_range(0.05..0.6)];
        if (0..4).any(|i| (i + 1..4).any(|j| (x[i] - x[j]).abs() < KINK_GAP)) {
            return None;
        }
        Some((
            x,
            Box::new(|y: &[f64]| {
                let (v, g) = giou_1d_with_grad((y[0], y[1]), (y[2], y[3]));
                (v, g.to_vec())
            }),
        ))
    })
}

pub fn fd_neg_pair(trials: usize) -> FdStats {
    run_op("neg_pair_loss", trials, 15, |r| {
        let t = r.gen_range(1..=16);
        Some((
            random_track(r, t),
            Box::new(|y: &[f64]| {
                let rep = neg_pair_loss(&SaliencyTrack::new(y.to_vec()));
                (rep.total, rep.grad("s_neg").unwrap().to_vec())
            }),
        ))
    })
}

pub fn fd_contrastive(trials: usize) -> FdStats {
    run_op("contrastive_rank_loss", trials, 16, |r| {
        let t = r.gen_range(3..=16);
        let max_rank = r.gen_range(1..=3);
        let ranks: Vec<usize> = (0..t).map(|_| r.gen_range(0..=max_rank)).collect();
        let tau = r.gen_range(0.2..2.0);
        Some((
            random_track(r, t),
            Box::new(move |y: &[f64]| {
                let rep = contrastive_rank_loss(y, &ranks, tau, max_rank).unwrap();
                (rep.total, rep.grad("scores").unwrap().to_vec())
            }),
        ))
    })
}

pub fn fd_class_nll(trials: usize) -> FdStats {
    run_op("class_nll", trials, 17, |r| {
        let n = r.gen_range(1..=8);
        let targets: Vec<usize> = (0..n).map(|_| r.gen_range(0..2)).collect();
        Some((
            random_track(r, 2 * n),
            Box::new(move |y: &[f64]| {
                let logits: Vec<[f64; 2]> = y.chunks(2).map(|c| [c[0], c[1]]).collect();
                let rep = class_nll(&logits, &targets).unwrap();
                (rep.total, rep.grad("cls_logits").unwrap().to_vec())
            }),
        ))
    })
}

/// Base terms, coarse and fine ranking merged by `combine`, differentiated
/// with respect to all five raw tracks.
pub fn fd_combined(trials: usize) -> FdStats {
    run_op("combine (full ranking objective)", trials, 18, |r| {
        let t = r.gen_range(4..=16);
        let span = random_span(r, t);
        let coarse = CoarseConfig { q: [1, 4, 8][r.gen_range(0..3)], ..Default::default() };
        let fine = FineConfig::default();
        let (alpha, beta) = (r.gen_range(0.1..2.0), r.gen_range(0.1..2.0));
        let replace = r.gen_bool(0.5);
        let x = random_track(r, 5 * t);
        let tr: [SaliencyTrack; 5] = split_tracks(&x, 5).try_into().unwrap();
        let smooth = coarse_args(tr[0].raw(), tr[4].raw(), span, &coarse).iter().all(|a| a.abs() > KINK_GAP)
            && fine_args(&tr, span, &fine).iter().all(|a| a.abs() > KINK_GAP)
            && pooling_is_smooth(tr[0].raw(), span, coarse.q)
            && pooling_is_smooth(tr[4].raw(), span, coarse.q)
            && max_is_unique(tr[0].raw(), span);
        if !smooth {
            return None;
        }
        let ranks: Vec<usize> = (0..t).map(|i| usize::from(span.contains(i))).collect();
        Some((
            x,
            Box::new(move |y: &[f64]| {
                let tr = split_tracks(y, 5);
                let neg = neg_pair_loss(&tr[4]);
                let sal = contrastive_rank_loss(tr[0].raw(), &ranks, 0.5, 1).unwrap();
                let base = [
                    WeightedTerm { name: "neg", weight: 0.7, report: &neg },
                    WeightedTerm { name: SALIENCY_TERM, weight: 1.3, report: &sal },
                ];
                let c = coarse_loss(&tr[0], &tr[4], span, &coarse).unwrap();
                let f = fine_loss([&tr[0], &tr[1], &tr[2], &tr[3], &tr[4]], span, &fine).unwrap();
                let rep = combine(&base, Some(&c), Some(&f), alpha, beta, replace).unwrap();
                let keys: [&[&str]; 5] =
                    [&["scores", "s_p"], &["s_hn1"], &["s_hn2"], &["s_hn3"], &["s_neg", "s_n"]];
                (rep.total, concat_grads(&rep, &keys, t))
            }),
        ))
    })
}

fn flat(p: &ModelParams) -> Vec<f64> {
    p.fields().iter().flat_map(|(_, a)| a.iter().copied().collect::<Vec<_>>()).collect()
}

fn unflat(template: &ModelParams, x: &[f64]) -> ModelParams {
    let mut p = template.clone();
    let mut it = x.iter();
    for (_, mut a) in p.fields_mut() {
        for v in a.iter_mut() {
            *v = *it.next().expect("enough values");
        }
    }
    p
}

pub fn tiny_model_config() -> ModelConfig {
    ModelConfig { d_v: 4, d_e: 4, d_h: 8, n_queries: 2, vocab_size: 6 }
}

/// Full objective of the toy scorer, all parameters, matching held fixed.
pub fn fd_end_to_end(trials: usize) -> FdStats {
    let mut seed = 0u64;
    run_op("toy scorer end to end", trials, 19, move |r| {
        seed += 1;
        let p = ModelParams::init(tiny_model_config(), seed);
        let s = TrainSample {
            id: "fd".into(),
            features: Array2::from_shape_simple_fn((4, 4), || r.gen_range(-1.0..1.0)),
            span: ClipSpan { start: 1, end: 3 },
            queries: [vec![0, 1, 2], vec![0, 3, 2], vec![4, 3, 2], vec![4, 3, 5]],
        };
        let cfg = ObjectiveConfig::default();
        let easy = vec![5, 1];
        let matched = sample_objective(&p, &s, &easy, &cfg, None, None).ok()?.matched;
        let x = flat(&p);
        Some((
            x,
            Box::new(move |y: &[f64]| {
                let q = unflat(&p, y);
                let mut g = ModelParams::zeros(q.config);
                let res = sample_objective(&q, &s, &easy, &cfg, Some(matched), Some(&mut g)).unwrap();
                (res.report.total, flat(&g))
            }),
        ))
    })
}

pub fn fd_suite(trials: usize) -> Vec<FdStats> {
    vec![
        fd_coarse(trials),
        fd_fine(trials, FineMode::Relative),
        fd_fine(trials, FineMode::Absolute),
        fd_span(trials),
        fd_giou(trials),
        fd_neg_pair(trials),
        fd_contrastive(trials),
        fd_class_nll(trials),
        fd_combined(trials),
        fd_end_to_end(trials),
    ]
}

// ---------------------------------------------------------------- pooling

/// Sort in-span scores descending and average the first `max(1, T+ / q)`.
pub fn pooled_oracle(scores: &[f64], span: ClipSpan, q: usize) -> (f64, usize) {
    let mut inside: Vec<f64> = scores[span.start..span.end].to_vec();
    inside.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut k = 0;
    while (k + 1) * q <= inside.len() {
        k += 1;
    }
    let k = k.max(1);
    (inside[..k].iter().sum::<f64>() / k as f64, k)
}

/// Mismatches of `pooled_pos` against the oracle over `T+ in 1..=64`,
/// `q in {1, 4, 8, 16}` (random placement), plus every span of every
/// `T <= 12`.
pub fn pooled_grid_mismatches() -> (usize, usize) {
    let mut r = rng(21);
    let mut cases = 0;
    let mut bad = 0;
    let mut check = |s: &[f64], span: ClipSpan, q: usize| {
        cases += 1;
        let got = pooled_pos(s, span, q).unwrap();
        let (v, k) = pooled_oracle(s, span, q);
        if got.k != k || (got.value - v).abs() > 1e-12 {
            bad += 1;
        }
    };
    for tp in 1..=64 {
        for q in [1, 4, 8, 16] {
            let t = tp + r.gen_range(0..8);
            let start = r.gen_range(0..=t - tp);
            let s = random_track(&mut r, t);
            check(&s, ClipSpan { start, end: start + tp }, q);
        }
    }
    for t in 1..=12 {
        let s = random_track(&mut r, t);
        for a in 0..t {
            for b in a + 1..=t {
                for q in [1, 2, 3, 4, 8] {
                    check(&s, ClipSpan { start: a, end: b }, q);
                }
            }
        }
    }
    (cases, bad)
}

// ---------------------------------------------------------------- matcher

/// Minimum total cost and the lexicographically smallest optimal pair list,
/// by enumerating every injective assignment.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> (f64, Vec<(usize, usize)>) {
    let rows = cost.len();
    let cols = cost[0].len();
    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    let mut used = vec![false; rows.max(cols)];
    let mut cur: Vec<(usize, usize)> = Vec::new();
    // enumerate over the smaller side
    fn rec(
        i: usize,
        cost: &[Vec<f64>],
        transpose: bool,
        used: &mut [bool],
        cur: &mut Vec<(usize, usize)>,
        best: &mut Option<(f64, Vec<(usize, usize)>)>,
    ) {
        let (n_small, n_big) = if transpose { (cost[0].len(), cost.len()) } else { (cost.len(), cost[0].len()) };
        if i == n_small {
            let mut pairs = cur.clone();
            pairs.sort_unstable();
            let total: f64 = pairs.iter().map(|&(a, b)| cost[a][b]).sum();
            let better = match best {
                None => true,
                Some((bc, bp)) => total < *bc - 1e-9 || ((total - *bc).abs() <= 1e-9 && pairs < *bp),
            };
            if better {
                *best = Some((total, pairs));
            }
            return;
        }
        for j in 0..n_big {
            if used[j] {
                continue;
            }
            used[j] = true;
            cur.push(if transpose { (j, i) } else { (i, j) });
            rec(i + 1, cost, transpose, used, cur, best);
            cur.pop();
            used[j] = false;
        }
    }
    rec(0, cost, rows > cols, &mut used, &mut cur, &mut best);
    best.expect("non-empty matrix")
}

/// `(matrices, cost mismatches, tie-break mismatches)` over `n` random
/// matrices up to 6x6; every third matrix has small integer entries so ties occur.
pub fn matcher_oracle(n: usize) -> (usize, usize, usize) {
    let mut r = rng(31);
    let mut cost_bad = 0;
    let mut tie_bad = 0;
    for m in 0..n {
        let rows = r.gen_range(1..=6);
        let cols = r.gen_range(1..=6);
        let c: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                (0..cols)
                    .map(|_| if m % 3 == 0 { r.gen_range(0..4) as f64 } else { r.gen_range(-5.0..5.0) })
                    .collect()
            })
            .collect();
        let got = solve(&c).unwrap();
        let (best, pairs) = brute_force_assignment(&c);
        if (got.total_cost - best).abs() > 1e-9 {
            cost_bad += 1;
        }
        if got.pairs != pairs {
            tie_bad += 1;
        }
    }
    (n, cost_bad, tie_bad)
}

// ---------------------------------------------------------------- forging

pub fn synthetic_queries(n: usize, seed: u64) -> Vec<TaggedQuery> {
    let cfg = SynthConfig { n_train: n, n_test: 2, ..Default::default() };
    let corpus = gen_corpus(&cfg, seed).unwrap();
    corpus.split(Split::Train).map(|s| s.query.clone()).collect()
}

#[derive(Debug, Default)]
pub struct ForgeCheck {
    pub queries: usize,
    pub nested: usize,
    pub position_faithful: usize,
    pub class_faithful: usize,
    pub deterministic: usize,
}

pub fn forge_invariants(n: usize) -> ForgeCheck {
    let queries = synthetic_queries(n, 41);
    let dict = build_dictionary(&queries, "train").unwrap();
    let lex = Lexicon::bundled();
    let ratios = [0.25, 0.5, 0.75];
    let mut out = ForgeCheck { queries: queries.len(), ..Default::default() };
    for q in &queries {
        let hn = forge_lexicon_hierarchy(q, ratios, &dict, 7, Weighting::Uniform).unwrap();
        let again = forge_lexicon_hierarchy(q, ratios, &dict, 7, Weighting::Uniform).unwrap();
        let plans = build_hierarchy(q, ratios).unwrap();
        let sets: Vec<Vec<usize>> = hn.iter().map(|h| h.masked_positions.clone()).collect();
        if sets.windows(2).all(|w| w[0].iter().all(|p| w[1].contains(p))) {
            out.nested += 1;
        }
        let mut pos_ok = true;
        let mut class_ok = true;
        for (rec, plan) in hn.iter().zip(&plans) {
            let toks = salrank::tagger::tokenize(&rec.negative_text);
            if token_diff(&q.tokens, &toks) != plan.sorted_positions() {
                pos_ok = false;
            }
            for (&p, &class) in plan.masked_positions.iter().zip(&plan.masked_classes) {
                if lex.classify(&toks[p]) != class {
                    class_ok = false;
                }
            }
        }
        out.position_faithful += usize::from(pos_ok);
        out.class_faithful += usize::from(class_ok);
        let texts = |v: &[salrank::corpus::NegativeRecord]| v.iter().map(|r| r.negative_text.clone()).collect::<Vec<_>>();
        out.deterministic += usize::from(texts(&hn) == texts(&again));
    }
    out
}

/// Candidate lists per mask parsed back out of a rendered prompt.
pub fn prompt_candidates(prompt: &str) -> Vec<(Tag, Vec<String>)> {
    prompt
        .lines()
        .filter(|l| l.starts_with("[MASK"))
        .map(|l| {
            let class: Tag = l.split('(').nth(1).unwrap().split(',').next().unwrap().trim().parse().unwrap();
            let list = l.rsplit_once("): ").map(|(_, x)| x).unwrap_or("");
            (class, list.split(", ").filter(|w| !w.is_empty()).map(String::from).collect())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MockMode {
    /// Always answers with a word outside every candidate list.
    OutOfSubset,
    /// Answers out of subset for the first `n` calls of each prompt family, then validly.
    BadThenValid(usize),
    /// Never parsable.
    Garbage,
    Valid,
    Unreachable,
}

/// Scripted chat endpoint that reads the candidate lists from the prompt.
pub struct MockEndpoint {
    pub mode: MockMode,
    pub calls: AtomicUsize,
    per_query: Mutex<HashMap<String, usize>>,
    pub prompts: Mutex<Vec<String>>,
}

impl MockEndpoint {
    pub fn new(mode: MockMode) -> Self {
        Self { mode, calls: AtomicUsize::new(0), per_query: Mutex::new(HashMap::new()), prompts: Mutex::new(Vec::new()) }
    }
}

impl ChatEndpoint for MockEndpoint {
    fn complete(&self, req: &ChatRequest) -> Result<String, EndpointError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = req.messages[0].content.clone();
        self.prompts.lock().unwrap().push(prompt.clone());
        let masked = prompt.lines().find(|l| l.contains("[MASK")).unwrap_or("").to_string();
        let seen = {
            let mut m = self.per_query.lock().unwrap();
            let c = m.entry(masked).or_insert(0);
            *c += 1;
            *c
        };
        let cands = prompt_candidates(&prompt);
        let valid = || {
            let words: Vec<&str> = cands.iter().map(|(_, l)| l[0].as_str()).collect();
            format!("ANSWER: {}", words.join(" | "))
        };
        let bogus = || format!("ANSWER: {}", vec!["zzyzx"; cands.len()].join(" | "));
        match self.mode {
            MockMode::Valid => Ok(valid()),
            MockMode::OutOfSubset => Ok(bogus()),
            MockMode::Garbage => Ok("I would rather not.".into()),
            MockMode::BadThenValid(n) => Ok(if seen <= n { bogus() } else { valid() }),
            MockMode::Unreachable => Err(EndpointError::Unreachable("mock".into())),
        }
    }

    fn model_id(&self) -> String {
        "mock-model".into()
    }
}

// ---------------------------------------------------------------- fixtures

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub got: f64,
    pub want: f64,
}

impl Fixture {
    pub fn ok(&self, tol: f64) -> bool {
        (self.got - self.want).abs() <= tol
    }
}

fn fx(name: &'static str, got: f64, want: f64) -> Fixture {
    Fixture { name, got, want }
}

fn track(v: &[f64]) -> SaliencyTrack {
    SaliencyTrack::new(v.to_vec())
}

/// Hand-computed values for pooling, the coarse and fine losses and their
/// helper distances.
pub fn formula_fixtures() -> Vec<Fixture> {
    use salrank::ranking::{fine_from_distances, giou_1d};
    let mut out = Vec::new();

    let mut s16 = vec![0.1; 16];
    s16[3] = 0.9;
    s16[11] = 0.7;
    s16[7] = 0.5;
    let p = pooled_pos(&s16, ClipSpan { start: 0, end: 16 }, 8).unwrap();
    out.push(fx("pooled T+=16 q=8: k", p.k as f64, 2.0));
    out.push(fx("pooled T+=16 q=8: value", p.value, 0.8));
    let s5 = [0.3, -0.2, 1.7, 0.4, 0.0];
    let p = pooled_pos(&s5, ClipSpan { start: 0, end: 5 }, 8).unwrap();
    out.push(fx("pooled T+=5 q=8: k", p.k as f64, 1.0));
    out.push(fx("pooled T+=5 q=8: value", p.value, 1.7));

    let s6 = [0.1, 0.3, 5.0, 5.0, 5.0, 0.2];
    out.push(fx("max_outside", max_outside(&s6, ClipSpan { start: 2, end: 5 }).unwrap().0, 0.3));
    out.push(fx(
        "max_outside constant",
        max_outside(&[0.4, 9.0, 0.4, 0.4], ClipSpan { start: 1, end: 2 }).unwrap().0,
        0.4,
    ));

    // one in-span clip, so k = 1 and pooled values are the raw entries
    let cfg = CoarseConfig::default();
    let span = ClipSpan { start: 1, end: 2 };
    let rep = coarse_loss(&track(&[0.5, 2.0, 0.5]), &track(&[0.0, -0.5, 0.0]), span, &cfg).unwrap();
    out.push(fx("coarse both inactive", rep.total, 0.0));
    let rep = coarse_loss(&track(&[0.1, 0.2, 0.05]), &track(&[-1.0, 0.0, -1.0]), span, &cfg).unwrap();
    out.push(fx("coarse both active", rep.total, 2.7));
    out.push(fx("coarse d/d(top in-span)", rep.grad("s_p").unwrap()[1], -2.0));
    out.push(fx("coarse d/d(max outside)", rep.grad("s_p").unwrap()[0], 1.0));
    out.push(fx("coarse d/d(negative pooled)", rep.grad("s_n").unwrap()[1], 1.0));

    out.push(fx(
        "pseudo label",
        pseudo_label(ClipSpan { start: 2, end: 5 }, 6).unwrap().iter().zip([0., 0., 1., 1., 1., 0.]).map(|(a, b)| (a - b).abs()).sum(),
        0.0,
    ));
    out.push(fx("nll distance", nll_distance(&[1., 1., 0., 0.], &[0.5, 0.5, 0.9, 0.9]).unwrap(), 2.0 * 2f64.ln() / 4.0));

    let rel = FineConfig::default();
    let abs = FineConfig { mode: FineMode::Absolute, ..Default::default() };
    let sum4 = |t: [f64; 4]| t.iter().sum::<f64>();
    out.push(fx("fine ordered distances", sum4(fine_from_distances([0.0, 0.3, 0.6, 0.9, 1.2], &rel).0), 0.0));
    out.push(fx("fine relative hand case", sum4(fine_from_distances([0.5, 0.3, 0.2, 0.2, 0.1], &rel).0), 1.4));
    out.push(fx("fine absolute hand case", sum4(fine_from_distances([0.5, 0.3, 0.2, 0.2, 0.1], &abs).0), 1.6));
    let same = track(&[0.3, -1.0, 2.0, 0.1]);
    let rep = fine_loss([&same, &same, &same, &same, &same], ClipSpan { start: 0, end: 2 }, &rel).unwrap();
    out.push(fx("fine identical tracks: l2", rep.term("l2"), 0.25));
    out.push(fx("fine identical tracks: l3", rep.term("l3"), 0.25));
    out.push(fx("fine identical tracks: l4", rep.term("l4"), 0.25));

    out.push(fx("giou identical", giou_1d((1.0, 3.0), (1.0, 3.0)), 1.0));
    out.push(fx("giou disjoint", giou_1d((0.0, 2.0), (4.0, 6.0)), -1.0 / 3.0));
    out.push(fx("giou overlap", giou_1d((0.0, 4.0), (2.0, 6.0)), 1.0 / 3.0));

    let one = neg_pair_loss(&track(&[0.0]));
    out.push(fx("neg pair at s=0.5", one.total, 2f64.ln()));
    let c = contrastive_rank_loss(&[0.7, 0.7], &[1, 0], 0.5, 1).unwrap();
    out.push(fx("contrastive tie", c.total, 2f64.ln()));
    out
}

fn ms(a: f64, b: f64) -> salrank::span::MomentSpan {
    salrank::span::MomentSpan::new(a, b).unwrap()
}

/// Hand-computed metric values.
pub fn metric_fixtures() -> Vec<Fixture> {
    use salrank::eval::{iou_1d, mean_iou, ordering_accuracy, recall_at};
    use salrank::ranking::giou_1d;
    let mut out = Vec::new();
    out.push(fx("iou overlap", iou_1d(&ms(2.0, 6.0), &ms(4.0, 8.0)), 1.0 / 3.0));
    out.push(fx("iou identical", iou_1d(&ms(2.0, 6.0), &ms(2.0, 6.0)), 1.0));
    out.push(fx("iou disjoint", iou_1d(&ms(0.0, 1.0), &ms(2.0, 3.0)), 0.0));
    out.push(fx("giou identical", giou_1d((2.0, 6.0), (2.0, 6.0)), 1.0));
    out.push(fx("giou disjoint", giou_1d((0.0, 2.0), (4.0, 6.0)), -1.0 / 3.0));
    out.push(fx("giou overlap", giou_1d((0.0, 4.0), (2.0, 6.0)), 1.0 / 3.0));

    // IoU 0.6: [0, 6] vs [0, 10]... use [0, 3] vs [0, 5] = 3/5
    let gt = [ms(0.0, 5.0)];
    let pred = [vec![ms(0.0, 3.0)]];
    out.push(fx("recall iou 0.6 at m=0.5", recall_at(&pred, &gt, 1, 0.5).unwrap(), 1.0));
    out.push(fx("recall iou 0.6 at m=0.7", recall_at(&pred, &gt, 1, 0.7).unwrap(), 0.0));
    let gts = [ms(0.0, 10.0), ms(0.0, 10.0)];
    let preds = [vec![ms(0.0, 8.0)], vec![ms(0.0, 4.0)]];
    out.push(fx("recall two queries", recall_at(&preds, &gts, 1, 0.5).unwrap(), 0.5));
    let strict = [vec![ms(0.0, 5.0)]];
    out.push(fx("recall strict at iou 0.5", recall_at(&strict, &[ms(0.0, 10.0)], 1, 0.5).unwrap(), 0.0));

    out.push(fx(
        "mean iou thirds",
        mean_iou(&[ms(0.0, 1.0), ms(0.0, 2.0)], &[ms(0.0, 3.0), ms(0.0, 3.0)]).unwrap(),
        0.5,
    ));
    out.push(fx("mean iou exact", mean_iou(&[ms(1.0, 2.0), ms(3.0, 5.0)], &[ms(1.0, 2.0), ms(3.0, 5.0)]).unwrap(), 1.0));
    out.push(fx("mean iou disjoint", mean_iou(&[ms(0.0, 1.0)], &[ms(2.0, 3.0)]).unwrap(), 0.0));

    let good = vec![5.0, 4.0, 3.0, 2.0, 1.0];
    let flat = vec![1.0; 5];
    out.push(fx("ordering all ordered", ordering_accuracy(&vec![good.clone(); 10]).unwrap(), 1.0));
    out.push(fx("ordering all tied", ordering_accuracy(&vec![flat.clone(); 10]).unwrap(), 0.0));
    let mut half = vec![good; 5];
    half.extend(vec![flat; 5]);
    out.push(fx("ordering half", ordering_accuracy(&half).unwrap(), 0.5));
    out
}

/// Counts instances (out of `n`) where `recall_at` decreases with `n` or
/// increases with `m`.
pub fn recall_monotonicity_violations(n: usize, seed: u64) -> usize {
    use salrank::eval::recall_at;
    let mut r = rng(seed);
    let mut bad = 0;
    for _ in 0..n {
        let q = r.gen_range(1..6);
        let k = r.gen_range(1..6);
        let span = |r: &mut ChaCha8Rng| {
            let a = r.gen_range(0.0..20.0);
            ms(a, a + r.gen_range(0.5..10.0))
        };
        let gts: Vec<_> = (0..q).map(|_| span(&mut r)).collect();
        let preds: Vec<Vec<_>> = (0..q).map(|_| (0..k).map(|_| span(&mut r)).collect()).collect();
        let m1 = r.gen_range(0.0..1.0);
        let m2 = r.gen_range(m1..=1.0);
        let n1 = r.gen_range(1..=k);
        let n2 = r.gen_range(n1..=k);
        let at = |n, m| recall_at(&preds, &gts, n, m).unwrap();
        if at(n1, m2) > at(n1, m1) || at(n1, m1) > at(n2, m1) {
            bad += 1;
        }
    }
    bad
}
