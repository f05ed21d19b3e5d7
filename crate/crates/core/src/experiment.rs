//! End-to-end runs on the synthetic corpus: forging, training, evaluation
//! and the ablation grid.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Split;
use crate::eval::{
    hierarchy_violation_rate, mean_iou, ordering_accuracy, recall_at, EvalError, EvalReport,
    SplitMetrics,
};
use crate::forge::{forge_lexicon_hierarchy, sample_easy_negative, ForgeError, Weighting};
use crate::model::{encode_video, run_query, ModelConfig, ModelError, ModelParams};
use crate::objective::{ObjectiveConfig, TrainSample};
use crate::ranking::{pooled_pos, FineMode};
use crate::span::{MomentSpan, NormSpan};
use crate::synth::SyntheticCorpus;
use crate::tagger::{build_dictionary, PrimitiveDictionary, TaggerError};
use crate::train::{train, TrainConfig, TrainError, TrainOutcome};
use crate::util::fingerprint;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Forge(#[from] ForgeError),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("word {0:?} is not in the token vocabulary")]
    UnknownWord(String),
}

/// Word <-> id table for the scorer's token embeddings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenVocab {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TokenVocab {
    pub fn new(words: impl IntoIterator<Item = String>) -> Self {
        let mut v = Self {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for w in words {
            if !v.index.contains_key(&w) {
                v.index.insert(w.clone(), v.words.len());
                v.words.push(w);
            }
        }
        v
    }

    /// Every word the synthetic template can produce.
    pub fn for_synthetic(corpus: &SyntheticCorpus) -> Self {
        let vb = &corpus.vocab;
        let fixed = ["person", "the"].map(String::from);
        Self::new(
            fixed
                .into_iter()
                .chain(vb.verbs.iter().cloned())
                .chain(vb.nouns.iter().cloned())
                .chain(vb.adjectives.iter().cloned())
                .chain(vb.prepositions.iter().cloned())
                .chain(vb.adverbs.iter().cloned()),
        )
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn encode(&self, tokens: &[String]) -> Result<Vec<usize>, ExperimentError> {
        tokens
            .iter()
            .map(|t| {
                self.index
                    .get(t)
                    .copied()
                    .ok_or_else(|| ExperimentError::UnknownWord(t.clone()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForgeSettings {
    pub ratios: [f64; 3],
    pub weighting: Weighting,
    pub seed: u64,
}

impl Default for ForgeSettings {
    fn default() -> Self {
        Self {
            ratios: [0.25, 0.5, 0.75],
            weighting: Weighting::Uniform,
            seed: 0,
        }
    }
}

/// Token-id samples for every split, with forged hard negatives attached.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub vocab: TokenVocab,
    pub dictionary: PrimitiveDictionary,
    pub train: Vec<TrainSample>,
    pub tests: BTreeMap<Split, Vec<TrainSample>>,
}

impl PreparedData {
    pub fn split(&self, split: Split) -> &[TrainSample] {
        match split {
            Split::Train => &self.train,
            s => self.tests.get(&s).map(|v| v.as_slice()).unwrap_or(&[]),
        }
    }
}

/// Builds the train dictionary and forges lexicon negatives for every sample.
pub fn prepare_synthetic(
    corpus: &SyntheticCorpus,
    forge: &ForgeSettings,
) -> Result<PreparedData, ExperimentError> {
    let vocab = TokenVocab::for_synthetic(corpus);
    let train_queries: Vec<_> = corpus.split(Split::Train).map(|s| s.query.clone()).collect();
    let dictionary = build_dictionary(&train_queries, Split::Train.as_str())?;
    let mut train_set = Vec::new();
    let mut tests: BTreeMap<Split, Vec<TrainSample>> = BTreeMap::new();
    for s in &corpus.samples {
        let hn = forge_lexicon_hierarchy(&s.query, forge.ratios, &dictionary, forge.seed, forge.weighting)?;
        let pos = vocab.encode(&s.query.tokens)?;
        let mut neg = Vec::with_capacity(3);
        for r in &hn {
            neg.push(vocab.encode(&crate::tagger::tokenize(&r.negative_text))?);
        }
        let [a, b, c]: [Vec<usize>; 3] = neg.try_into().expect("three levels");
        let item = TrainSample {
            id: s.id.clone(),
            features: s.clip_features.clone(),
            span: s.span,
            queries: [pos, a, b, c],
        };
        match s.split {
            Split::Train => train_set.push(item),
            other => tests.entry(other).or_default().push(item),
        }
    }
    Ok(PreparedData {
        vocab,
        dictionary,
        train: train_set,
        tests,
    })
}

/// Per-sample scores used by metrics and plot data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub id: String,
    /// Normalized ground-truth `(start, end)`.
    pub gt: (f64, f64),
    /// Predicted spans ranked by foreground probability.
    pub ranked: Vec<(f64, f64)>,
    /// Raw saliency of positive, hn1..hn3 and easy negative.
    pub saliency: [Vec<f64>; 5],
    /// Top-k pooled saliency over the positive span for the same five roles.
    pub pooled: [f64; 5],
    /// Sample whose positive query served as the easy negative.
    pub easy_id: String,
}

pub const ROLES: [&str; 5] = ["positive", "hn1", "hn2", "hn3", "easy"];

/// Scores every sample of a split; easy negatives come from other samples
/// of the same split.
pub fn score_split(
    params: &ModelParams,
    samples: &[TrainSample],
    q: usize,
    seed: u64,
) -> Result<Vec<SampleScores>, ExperimentError> {
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let mut out = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let video = encode_video(params, s.features.view())?;
        let pos = run_query(params, &video, &s.queries[0], true)?;
        let easy_id = sample_easy_negative(&ids, i, seed)?;
        let j = ids.iter().position(|x| *x == easy_id).expect("id from split");
        let mut sal = vec![pos.saliency.clone()];
        for tokens in s.queries[1..].iter().chain([&samples[j].queries[0]]) {
            sal.push(run_query(params, &video, tokens, false)?.saliency);
        }
        let mut pooled = [0.0; 5];
        for (k, tr) in sal.iter().enumerate() {
            pooled[k] = pooled_pos(tr, s.span, q).expect("span inside track").value;
        }
        let mut preds = pos.predictions();
        // stable: equal probabilities keep query order
        preds.sort_by(|a, b| b.class_probs[0].total_cmp(&a.class_probs[0]));
        let gt = s.gt();
        out.push(SampleScores {
            id: s.id.clone(),
            gt: (gt.start(), gt.end()),
            ranked: preds.iter().map(|p| clamp_unit(p.span)).collect(),
            saliency: sal.try_into().expect("five roles"),
            pooled,
            easy_id,
        });
    }
    Ok(out)
}

fn clamp_unit(s: NormSpan) -> (f64, f64) {
    let a = s.start().clamp(0.0, 1.0);
    let b = s.end().clamp(0.0, 1.0);
    (a, b.max(a))
}

fn to_moment((a, b): (f64, f64)) -> MomentSpan {
    MomentSpan { start: a, end: b }
}

pub fn metrics_from_scores(scores: &[SampleScores]) -> Result<SplitMetrics, EvalError> {
    let preds: Vec<Vec<MomentSpan>> = scores
        .iter()
        .map(|s| s.ranked.iter().map(|&x| to_moment(x)).collect())
        .collect();
    let gts: Vec<MomentSpan> = scores.iter().map(|s| to_moment(s.gt)).collect();
    let top1: Vec<MomentSpan> = preds.iter().map(|p| p[0]).collect();
    let records: Vec<Vec<f64>> = scores.iter().map(|s| s.pooled.to_vec()).collect();
    Ok(SplitMetrics {
        r1_05: recall_at(&preds, &gts, 1, 0.5)?,
        r1_07: recall_at(&preds, &gts, 1, 0.7)?,
        miou: mean_iou(&top1, &gts)?,
        ordering_accuracy: ordering_accuracy(&records)?,
        hierarchy_violation_rate: hierarchy_violation_rate(&records)?,
    })
}

/// Everything that determines one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub objective: ObjectiveConfig,
    pub train: TrainConfig,
    pub model: ModelConfig,
}

impl RunSpec {
    pub fn fingerprint(&self) -> String {
        fingerprint(&serde_json::to_string(self).expect("run spec serializes"))
    }
}

pub struct RunResult {
    pub outcome: TrainOutcome,
    pub report: EvalReport,
}

/// Initializes from `spec.train.seed`, trains, then evaluates every test split.
pub fn run_experiment(
    data: &PreparedData,
    spec: &RunSpec,
    eval_each_epoch: bool,
    trace: Option<&mut dyn std::io::Write>,
) -> Result<RunResult, ExperimentError> {
    let init = ModelParams::init(spec.model, spec.train.seed);
    let q = spec.objective.coarse.q;
    let seed = spec.train.seed;
    let mut hook = |p: &ModelParams| -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for (split, samples) in &data.tests {
            if let Ok(scores) = score_split(p, samples, q, seed) {
                if let Ok(met) = metrics_from_scores(&scores) {
                    for (name, v) in SplitMetrics::NAMES.iter().zip(met.values()) {
                        m.insert(format!("{}.{name}", split.as_str()), v);
                    }
                }
            }
        }
        m
    };
    let eval: Option<&mut dyn FnMut(&ModelParams) -> BTreeMap<String, f64>> =
        if eval_each_epoch { Some(&mut hook) } else { None };
    let outcome = train(init, &data.train, &spec.objective, &spec.train, eval, trace)?;
    let mut splits = BTreeMap::new();
    for (split, samples) in &data.tests {
        let scores = score_split(&outcome.params, samples, q, seed)?;
        splits.insert(split.as_str().to_string(), metrics_from_scores(&scores)?);
    }
    Ok(RunResult {
        report: EvalReport {
            fingerprint: spec.fingerprint(),
            seed,
            splits,
        },
        outcome,
    })
}

/// A named loss configuration in an ablation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub name: String,
    pub objective: ObjectiveConfig,
}

fn row(name: &str, objective: ObjectiveConfig) -> GridRow {
    GridRow {
        name: name.to_string(),
        objective,
    }
}

/// Coarse-ranking rows: base, +intra (replacing the base saliency term),
/// +inter, +both. Fine ranking stays off.
pub fn coarse_grid() -> Vec<GridRow> {
    let base = ObjectiveConfig::base_only();
    let with = |intra: bool, inter: bool| {
        let mut c = base;
        c.coarse.use_intra = intra;
        c.coarse.use_inter = inter;
        c
    };
    vec![
        row("base", base),
        row("base+intra*", with(true, false)),
        row("base+inter", with(false, true)),
        row("base+intra*+inter", with(true, true)),
    ]
}

/// Fine-ranking rows over subsets of the four hinge terms and the coarse
/// loss, plus the absolute-anchoring variant of the full objective.
pub fn fine_grid() -> Vec<GridRow> {
    let mk = |terms: [bool; 4], coarse: bool| {
        let mut c = ObjectiveConfig::default();
        c.fine.use_terms = terms;
        c.coarse.use_intra = coarse;
        c.coarse.use_inter = coarse;
        c
    };
    let label = |terms: [bool; 4], coarse: bool| {
        let mut parts = vec!["base".to_string()];
        for (k, on) in terms.iter().enumerate() {
            if *on {
                parts.push(format!("fr{}", k + 1));
            }
        }
        if coarse {
            parts.push("cr".into());
        }
        parts.join("+")
    };
    let subsets: [([bool; 4], bool); 9] = [
        ([false; 4], false),
        ([true, false, false, false], false),
        ([true, true, false, false], false),
        ([true, true, true, false], false),
        ([true; 4], false),
        ([true, true, false, false], true),
        ([true, true, true, false], true),
        ([true, true, false, true], true),
        ([true; 4], true),
    ];
    let mut rows: Vec<GridRow> = subsets.iter().map(|&(t, c)| row(&label(t, c), mk(t, c))).collect();
    let mut abs = mk([true; 4], true);
    abs.fine.mode = FineMode::Absolute;
    rows.push(row("base+fr1..4(absolute)+cr", abs));
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub seed: u64,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowResult {
    pub name: String,
    pub fingerprint: String,
    pub cells: Vec<CellResult>,
    /// Per split: metric means and standard deviations over successful seeds.
    pub mean: BTreeMap<String, SplitMetrics>,
    pub std: BTreeMap<String, SplitMetrics>,
}

impl RowResult {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.report.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<RowResult>,
}

fn mean_std(cells: &[CellResult]) -> (BTreeMap<String, SplitMetrics>, BTreeMap<String, SplitMetrics>) {
    let reports: Vec<&EvalReport> = cells.iter().filter_map(|c| c.report.as_ref()).collect();
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    let Some(first) = reports.first() else {
        return (mean, std);
    };
    let n = reports.len() as f64;
    for split in first.splits.keys() {
        let vals: Vec<[f64; 5]> = reports.iter().map(|r| r.splits[split].values()).collect();
        let mut m = [0.0; 5];
        let mut s = [0.0; 5];
        for k in 0..5 {
            m[k] = vals.iter().map(|v| v[k]).sum::<f64>() / n;
            s[k] = (vals.iter().map(|v| (v[k] - m[k]).powi(2)).sum::<f64>() / n).sqrt();
        }
        mean.insert(split.clone(), SplitMetrics::from_values(m));
        std.insert(split.clone(), SplitMetrics::from_values(s));
    }
    (mean, std)
}

/// Trains every (row, seed) cell and aggregates mean and std over seeds.
/// Cells run on up to `workers` threads; a failing cell is recorded, not fatal.
pub fn ablate(
    grid: &[GridRow],
    data: &PreparedData,
    seeds: &[u64],
    train_cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    workers: usize,
) -> Result<AblationTable, ExperimentError> {
    if grid.is_empty() || seeds.is_empty() {
        return Err(EvalError::EmptyGrid.into());
    }
    let cells: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|r| seeds.iter().map(move |&s| (r, s)))
        .collect();
    let run_cell = |&(r, seed): &(usize, u64)| -> CellResult {
        let spec = RunSpec {
            objective: grid[r].objective,
            train: TrainConfig { seed, ..*train_cfg },
            model: *model_cfg,
        };
        match run_experiment(data, &spec, false, None) {
            Ok(res) => CellResult {
                seed,
                report: Some(res.report),
                error: None,
            },
            Err(e) => CellResult {
                seed,
                report: None,
                error: Some(e.to_string()),
            },
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<CellResult> = pool.install(|| cells.par_iter().map(run_cell).collect());

    let mut rows = Vec::with_capacity(grid.len());
    for (r, g) in grid.iter().enumerate() {
        let cells: Vec<CellResult> = results[r * seeds.len()..(r + 1) * seeds.len()].to_vec();
        let (mean, std) = mean_std(&cells);
        let spec = RunSpec {
            objective: g.objective,
            train: *train_cfg,
            model: *model_cfg,
        };
        rows.push(RowResult {
            name: g.name.clone(),
            fingerprint: spec.fingerprint(),
            cells,
            mean,
            std,
        });
    }
    Ok(AblationTable {
        seeds: seeds.to_vec(),
        rows,
    })
}

impl AblationTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes") + "\n"
    }

    /// Fixed-width text table: one line per (row, split), mean ± std.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let name_w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
        out.push_str(&format!("{:<name_w$}  {:<17}", "row", "split"));
        for m in SplitMetrics::NAMES {
            let short = match m {
                "ordering_accuracy" => "order_acc",
                "hierarchy_violation_rate" => "violations",
                x => x,
            };
            out.push_str(&format!("  {short:>15}"));
        }
        out.push_str("  failed\n");
        for r in &self.rows {
            for (split, m) in &r.mean {
                out.push_str(&format!("{:<name_w$}  {:<17}", r.name, split));
                let s = r.std[split].values();
                for (k, v) in m.values().iter().enumerate() {
                    out.push_str(&format!("  {:>7.3} ± {:<5.3}", v, s[k]));
                }
                out.push_str(&format!("  {}\n", r.failed()));
            }
            if r.mean.is_empty() {
                out.push_str(&format!("{:<name_w$}  (all cells failed)\n", r.name));
            }
        }
        out
    }
}
