//! Synthetic compositional grounding corpus with a known semantic oracle.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{save_annotations, Annotation, CorpusError, Split};
use crate::span::ClipSpan;
use crate::tagger::{Tag, TaggedQuery};
use crate::util::rng_for;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("vocabulary size {0} is outside 4..=16")]
    InsufficientVocab(usize),
    #[error("holdout fraction {0} must lie in (0, 0.5)")]
    BadHoldout(f64),
    #[error("overlap weights must be non-negative and sum to 1")]
    BadWeights,
    #[error("invalid synthetic config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

const VERBS: [&str; 16] = [
    "puts", "takes", "opens", "holds", "throws", "washes", "grabs", "closes", "pushes", "pulls",
    "lifts", "drops", "carries", "cleans", "fixes", "moves",
];
const NOUNS: [&str; 16] = [
    "towel", "closet", "door", "cup", "book", "laptop", "chair", "table", "bag", "phone", "shoe",
    "box", "pillow", "blanket", "window", "bottle",
];
const ADJS: [&str; 16] = [
    "red", "small", "wooden", "old", "blue", "large", "shiny", "dirty", "green", "heavy", "soft",
    "white", "black", "tiny", "new", "yellow",
];
const PREPS: [&str; 16] = [
    "in", "on", "under", "near", "behind", "into", "onto", "beside", "above", "inside", "toward",
    "from", "across", "along", "over", "through",
];
const ADVS: [&str; 16] = [
    "quickly", "slowly", "carefully", "gently", "quietly", "firmly", "briefly", "casually",
    "loudly", "neatly", "calmly", "eagerly", "happily", "lazily", "softly", "nervously",
];

pub const MAX_VOCAB: usize = 16;

/// Per-class word lists, indexed in `Tag::PRIMITIVES` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthVocab {
    pub verbs: Vec<String>,
    pub nouns: Vec<String>,
    pub adjectives: Vec<String>,
    pub prepositions: Vec<String>,
    pub adverbs: Vec<String>,
}

impl SynthVocab {
    pub fn new(size: usize) -> Result<Self, SynthError> {
        if !(4..=MAX_VOCAB).contains(&size) {
            return Err(SynthError::InsufficientVocab(size));
        }
        let take = |xs: &[&str]| xs[..size].iter().map(|s| s.to_string()).collect();
        Ok(Self {
            verbs: take(&VERBS),
            nouns: take(&NOUNS),
            adjectives: take(&ADJS),
            prepositions: take(&PREPS),
            adverbs: take(&ADVS),
        })
    }

    pub fn size(&self) -> usize {
        self.verbs.len()
    }

    pub fn class(&self, tag: Tag) -> &[String] {
        match tag {
            Tag::Verb => &self.verbs,
            Tag::Noun => &self.nouns,
            Tag::Adj => &self.adjectives,
            Tag::Prep => &self.prepositions,
            Tag::Adv => &self.adverbs,
            Tag::Other => &[],
        }
    }

    /// Index of `word` in its class list, or [`UNKNOWN_WORD`].
    fn index_of(&self, tag: Tag, word: &str) -> usize {
        self.class(tag)
            .iter()
            .position(|w| w == word)
            .unwrap_or(UNKNOWN_WORD)
    }
}

/// Slot value for a word outside the synthetic vocabulary; never equal to a real index.
pub const UNKNOWN_WORD: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventTuple {
    pub verb: usize,
    pub object_noun: usize,
    pub adjective: usize,
    pub preposition: usize,
    pub second_noun: usize,
    pub adverb: usize,
}

/// Template token positions of each slot:
/// `person <adv> <verb> the <adj> <obj> <prep> the <noun2>`.
const POS_ADV: usize = 1;
const POS_VERB: usize = 2;
const POS_ADJ: usize = 4;
const POS_OBJ: usize = 5;
const POS_PREP: usize = 6;
const POS_NOUN2: usize = 8;
const TEMPLATE_LEN: usize = 9;

impl EventTuple {
    pub fn render(&self, vocab: &SynthVocab, query_id: &str) -> TaggedQuery {
        let tokens = vec![
            "person".to_string(),
            vocab.adverbs[self.adverb].clone(),
            vocab.verbs[self.verb].clone(),
            "the".to_string(),
            vocab.adjectives[self.adjective].clone(),
            vocab.nouns[self.object_noun].clone(),
            vocab.prepositions[self.preposition].clone(),
            "the".to_string(),
            vocab.nouns[self.second_noun].clone(),
        ];
        let tags = vec![
            Tag::Noun,
            Tag::Adv,
            Tag::Verb,
            Tag::Other,
            Tag::Adj,
            Tag::Noun,
            Tag::Prep,
            Tag::Other,
            Tag::Noun,
        ];
        TaggedQuery::from_parts(query_id, tokens, tags)
    }

    /// Reads the slots back from template-shaped tokens; words outside the
    /// vocabulary map to [`UNKNOWN_WORD`].
    pub fn from_tokens(tokens: &[String], vocab: &SynthVocab) -> Option<Self> {
        if tokens.len() != TEMPLATE_LEN {
            return None;
        }
        Some(Self {
            verb: vocab.index_of(Tag::Verb, &tokens[POS_VERB]),
            object_noun: vocab.index_of(Tag::Noun, &tokens[POS_OBJ]),
            adjective: vocab.index_of(Tag::Adj, &tokens[POS_ADJ]),
            preposition: vocab.index_of(Tag::Prep, &tokens[POS_PREP]),
            second_noun: vocab.index_of(Tag::Noun, &tokens[POS_NOUN2]),
            adverb: vocab.index_of(Tag::Adv, &tokens[POS_ADV]),
        })
    }

    /// `(class, index)` for each of the six slots.
    fn slots(&self) -> [(Tag, usize); 6] {
        [
            (Tag::Verb, self.verb),
            (Tag::Noun, self.object_noun),
            (Tag::Adj, self.adjective),
            (Tag::Prep, self.preposition),
            (Tag::Noun, self.second_noun),
            (Tag::Adv, self.adverb),
        ]
    }
}

/// Per-class weights in `Tag::PRIMITIVES` order.
pub type OverlapWeights = [f64; 5];

pub const EQUAL_WEIGHTS: OverlapWeights = [0.2; 5];

/// `sum_class w_class * (fraction of that class's slots that agree)`.
/// The noun class has two slots (object and second noun).
pub fn semantic_overlap(
    a: &EventTuple,
    b: &EventTuple,
    weights: &OverlapWeights,
) -> Result<f64, SynthError> {
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(SynthError::BadWeights);
    }
    let eq = |x: usize, y: usize| if x == y && x != UNKNOWN_WORD { 1.0 } else { 0.0 };
    Ok(weights[0] * eq(a.verb, b.verb)
        + weights[1] * 0.5 * (eq(a.object_noun, b.object_noun) + eq(a.second_noun, b.second_noun))
        + weights[2] * eq(a.adjective, b.adjective)
        + weights[3] * eq(a.preposition, b.preposition)
        + weights[4] * eq(a.adverb, b.adverb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Words per primitive class.
    pub vocab_size: usize,
    pub n_train: usize,
    /// Samples in each of the three test splits.
    pub n_test: usize,
    pub num_clips: usize,
    pub clip_len_s: f64,
    pub d_v: usize,
    /// Std of the per-clip Gaussian feature noise.
    pub noise: f64,
    /// Std of the entries of each word embedding.
    pub emb_std: f64,
    /// Fraction of (verb, object) pairs withheld from train.
    pub holdout_frac: f64,
    /// Words per class withheld from train.
    pub heldout_words: usize,
    pub min_span: usize,
    pub max_span: usize,
    /// Longest run of clips covered by one distractor event.
    pub distractor_len: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            vocab_size: 12,
            n_train: 500,
            n_test: 100,
            num_clips: 32,
            clip_len_s: 1.0,
            d_v: 32,
            noise: 0.3,
            emb_std: 0.5,
            holdout_frac: 0.2,
            heldout_words: 1,
            min_span: 4,
            max_span: 12,
            distractor_len: 8,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(4..=MAX_VOCAB).contains(&self.vocab_size) {
            return Err(SynthError::InsufficientVocab(self.vocab_size));
        }
        if !(self.holdout_frac > 0.0 && self.holdout_frac < 0.5) {
            return Err(SynthError::BadHoldout(self.holdout_frac));
        }
        // two distinct nouns must remain available after the word holdout
        if self.heldout_words == 0 || self.vocab_size < self.heldout_words + 2 {
            return Err(SynthError::BadConfig(format!(
                "heldout_words {} leaves too few training words",
                self.heldout_words
            )));
        }
        if self.min_span == 0 || self.min_span > self.max_span || self.max_span >= self.num_clips {
            return Err(SynthError::BadConfig(format!(
                "span lengths {}..={} do not fit {} clips",
                self.min_span, self.max_span, self.num_clips
            )));
        }
        if self.n_train < 2 || self.d_v == 0 || self.distractor_len == 0 || !(self.clip_len_s > 0.0) {
            return Err(SynthError::BadConfig("sizes must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.emb_std > 0.0) {
            return Err(SynthError::BadConfig("noise and embedding scales".into()));
        }
        Ok(())
    }
}

/// Fixed random embeddings per (class, word).
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddings {
    /// One `vocab_size x d_v` table per class, `Tag::PRIMITIVES` order.
    tables: Vec<Array2<f64>>,
}

impl WordEmbeddings {
    fn generate(cfg: &SynthConfig, seed: u64) -> Self {
        let mut rng = rng_for(seed, &["synth", "embeddings"]);
        let normal = Normal::new(0.0, cfg.emb_std).expect("positive std");
        let tables = (0..5)
            .map(|_| Array2::from_shape_simple_fn((cfg.vocab_size, cfg.d_v), || normal.sample(&mut rng)))
            .collect();
        Self { tables }
    }

    fn table(&self, tag: Tag) -> &Array2<f64> {
        let i = tag.importance().expect("primitive class");
        &self.tables[i]
    }

    /// Sum of the six slot embeddings.
    pub fn event(&self, e: &EventTuple) -> Array1<f64> {
        let d = self.tables[0].ncols();
        let mut out = Array1::zeros(d);
        for (tag, idx) in e.slots() {
            out += &self.table(tag).row(idx);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub id: String,
    pub split: Split,
    /// `num_clips x d_v`.
    pub clip_features: Array2<f64>,
    pub span: ClipSpan,
    pub query: TaggedQuery,
    pub event: EventTuple,
    pub distractors: Vec<EventTuple>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: SynthConfig,
    pub seed: u64,
    pub vocab: SynthVocab,
    pub embeddings: WordEmbeddings,
    /// Held-out word indices per class, `Tag::PRIMITIVES` order.
    pub heldout_words: [Vec<usize>; 5],
    /// Held-out `(verb, object_noun)` pairs.
    pub heldout_pairs: BTreeSet<(usize, usize)>,
    pub samples: Vec<SyntheticSample>,
}

/// Words a split may draw from, per class.
struct Pools {
    seen: [Vec<usize>; 5],
    heldout: [Vec<usize>; 5],
}

impl Pools {
    fn pick(&self, rng: &mut impl Rng, class: usize) -> usize {
        *self.seen[class].choose(rng).expect("non-empty pool")
    }

    fn random_event(&self, rng: &mut impl Rng) -> EventTuple {
        let verb = self.pick(rng, 0);
        let object_noun = self.pick(rng, 1);
        self.fill_event(rng, verb, object_noun)
    }

    fn fill_event(&self, rng: &mut impl Rng, verb: usize, object_noun: usize) -> EventTuple {
        let second_noun = loop {
            let n = self.pick(rng, 1);
            if n != object_noun {
                break n;
            }
        };
        EventTuple {
            verb,
            object_noun,
            adjective: self.pick(rng, 2),
            preposition: self.pick(rng, 3),
            second_noun,
            adverb: self.pick(rng, 4),
        }
    }
}

impl SyntheticCorpus {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SyntheticSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn duration_s(&self) -> f64 {
        self.config.num_clips as f64 * self.config.clip_len_s
    }

    pub fn annotations(&self) -> Vec<Annotation> {
        self.samples
            .iter()
            .map(|s| Annotation {
                query_id: s.id.clone(),
                video_id: s.id.clone(),
                duration_s: self.duration_s(),
                span: s.span.to_seconds(self.config.clip_len_s),
                query_text: s.query.text(),
                split: s.split,
            })
            .collect()
    }

    /// Sidecar describing vocabularies, holdouts and every event tuple.
    pub fn sidecar(&self) -> Sidecar {
        let class_words = |lists: &[Vec<usize>; 5]| -> BTreeMap<String, Vec<String>> {
            Tag::PRIMITIVES
                .iter()
                .zip(lists)
                .map(|(t, idx)| {
                    let words = self.vocab.class(*t);
                    (t.as_str().to_string(), idx.iter().map(|&i| words[i].clone()).collect())
                })
                .collect()
        };
        Sidecar {
            seed: self.seed,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            heldout_words: class_words(&self.heldout_words),
            heldout_pairs: self.heldout_pairs.iter().copied().collect(),
            events: self
                .samples
                .iter()
                .map(|s| SidecarEvent {
                    query_id: s.id.clone(),
                    split: s.split,
                    span: [s.span.start, s.span.end],
                    event: s.event,
                    distractors: s.distractors.clone(),
                })
                .collect(),
        }
    }

    /// Writes `annotations.jsonl` and `synth_meta.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir)?;
        save_annotations(&self.annotations(), &dir.join(ANNOTATIONS_FILE))?;
        let json = serde_json::to_string_pretty(&self.sidecar()).expect("sidecar serializes");
        std::fs::write(dir.join(SIDECAR_FILE), json + "\n")?;
        Ok(())
    }
}

pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const SIDECAR_FILE: &str = "synth_meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarEvent {
    pub query_id: String,
    pub split: Split,
    pub span: [usize; 2],
    pub event: EventTuple,
    pub distractors: Vec<EventTuple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub seed: u64,
    pub config: SynthConfig,
    pub vocab: SynthVocab,
    pub heldout_words: BTreeMap<String, Vec<String>>,
    pub heldout_pairs: Vec<(usize, usize)>,
    pub events: Vec<SidecarEvent>,
}

impl Sidecar {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| SynthError::BadConfig(format!("sidecar: {e}")))
    }
}

/// One in-span clip feature: event embedding plus Gaussian noise.
pub fn draw_clip_feature(
    emb: &WordEmbeddings,
    event: &EventTuple,
    noise: f64,
    rng: &mut impl Rng,
) -> Array1<f64> {
    let mut x = emb.event(event);
    if noise > 0.0 {
        let n = Normal::new(0.0, noise).expect("non-negative std");
        x.mapv_inplace(|v| v + n.sample(rng));
    }
    x
}

fn build_sample(
    cfg: &SynthConfig,
    emb: &WordEmbeddings,
    vocab: &SynthVocab,
    pools: &Pools,
    split: Split,
    index: usize,
    event: EventTuple,
    rng: &mut impl Rng,
) -> SyntheticSample {
    let t = cfg.num_clips;
    let len = rng.gen_range(cfg.min_span..=cfg.max_span);
    let start = rng.gen_range(0..=t - len);
    let span = ClipSpan { start, end: start + len };

    let mut feats = Array2::zeros((t, cfg.d_v));
    let mut distractors = Vec::new();
    for i in span.start..span.end {
        feats.row_mut(i).assign(&draw_clip_feature(emb, &event, cfg.noise, rng));
    }
    // outside clips: runs of at most distractor_len clips, one distractor each
    for (lo, hi) in [(0, span.start), (span.end, t)] {
        let mut c = lo;
        while c < hi {
            let run = (hi - c).min(cfg.distractor_len);
            let d = loop {
                let d = pools.random_event(rng);
                if d != event {
                    break d;
                }
            };
            for i in c..c + run {
                feats.row_mut(i).assign(&draw_clip_feature(emb, &d, cfg.noise, rng));
            }
            distractors.push(d);
            c += run;
        }
    }
    let id = format!("syn-{}-{index:04}", split.as_str());
    SyntheticSample {
        query: event.render(vocab, &id),
        id,
        split,
        clip_features: feats,
        span,
        event,
        distractors,
    }
}

/// Generates the four splits. Every sample draws from its own seed stream.
pub fn gen_corpus(cfg: &SynthConfig, seed: u64) -> Result<SyntheticCorpus, SynthError> {
    cfg.validate()?;
    let vocab = SynthVocab::new(cfg.vocab_size)?;
    let emb = WordEmbeddings::generate(cfg, seed);
    let v = cfg.vocab_size;

    let mut rng = rng_for(seed, &["synth", "holdout"]);
    let mut heldout_words: [Vec<usize>; 5] = Default::default();
    let mut seen: [Vec<usize>; 5] = Default::default();
    for c in 0..5 {
        let mut idx: Vec<usize> = (0..v).collect();
        idx.shuffle(&mut rng);
        let mut held = idx[..cfg.heldout_words].to_vec();
        let mut rest = idx[cfg.heldout_words..].to_vec();
        held.sort_unstable();
        rest.sort_unstable();
        heldout_words[c] = held;
        seen[c] = rest;
    }
    let mut all_pairs: Vec<(usize, usize)> = seen[0]
        .iter()
        .flat_map(|&a| seen[1].iter().map(move |&b| (a, b)))
        .collect();
    all_pairs.shuffle(&mut rng);
    let n_held = ((all_pairs.len() as f64 * cfg.holdout_frac).round() as usize).max(1);
    let heldout_pairs: BTreeSet<(usize, usize)> = all_pairs[..n_held].iter().copied().collect();
    let train_pairs: Vec<(usize, usize)> = {
        let mut p: Vec<_> = all_pairs[n_held..].to_vec();
        p.sort_unstable();
        p
    };
    let held_list: Vec<(usize, usize)> = heldout_pairs.iter().copied().collect();
    let pools = Pools {
        seen,
        heldout: heldout_words.clone(),
    };

    let mut samples = Vec::new();
    for i in 0..cfg.n_train {
        let mut r = rng_for(seed, &["synth", "train", &i.to_string()]);
        let (verb, obj) = *train_pairs.choose(&mut r).expect("train pairs");
        let ev = pools.fill_event(&mut r, verb, obj);
        samples.push(build_sample(cfg, &emb, &vocab, &pools, Split::Train, i, ev, &mut r));
    }
    let seen_in_train: Vec<(usize, usize)> = samples
        .iter()
        .map(|s| (s.event.verb, s.event.object_noun))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    for split in Split::TEST {
        for i in 0..cfg.n_test {
            let mut r = rng_for(seed, &["synth", split.as_str(), &i.to_string()]);
            let ev = match split {
                Split::TestTrivial => {
                    let (verb, obj) = *seen_in_train.choose(&mut r).expect("train pairs");
                    pools.fill_event(&mut r, verb, obj)
                }
                Split::NovelComposition => {
                    let (verb, obj) = *held_list.choose(&mut r).expect("held-out pairs");
                    pools.fill_event(&mut r, verb, obj)
                }
                _ => {
                    let mut ev = pools.random_event(&mut r);
                    let slot = r.gen_range(0..6);
                    let class = [0, 1, 2, 3, 1, 4][slot];
                    let w = *pools.heldout[class].choose(&mut r).expect("held-out words");
                    match slot {
                        0 => ev.verb = w,
                        1 => ev.object_noun = w,
                        2 => ev.adjective = w,
                        3 => ev.preposition = w,
                        4 => ev.second_noun = w,
                        _ => ev.adverb = w,
                    }
                    ev
                }
            };
            samples.push(build_sample(cfg, &emb, &vocab, &pools, split, i, ev, &mut r));
        }
    }
    Ok(SyntheticCorpus {
        config: cfg.clone(),
        seed,
        vocab,
        embeddings: emb,
        heldout_words,
        heldout_pairs,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_train: 60,
            n_test: 20,
            ..Default::default()
        }
    }

    #[test]
    fn overlap_fixtures() {
        let a = EventTuple {
            verb: 0,
            object_noun: 1,
            adjective: 2,
            preposition: 3,
            second_noun: 4,
            adverb: 5,
        };
        assert_eq!(semantic_overlap(&a, &a, &EQUAL_WEIGHTS).unwrap(), 1.0);
        let b = EventTuple {
            verb: 6,
            object_noun: 7,
            adjective: 8,
            preposition: 9,
            second_noun: 10,
            adverb: 11,
        };
        assert_eq!(semantic_overlap(&a, &b, &EQUAL_WEIGHTS).unwrap(), 0.0);
        let c = EventTuple { adjective: 9, ..a };
        assert!((semantic_overlap(&a, &c, &EQUAL_WEIGHTS).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(
            semantic_overlap(&a, &b, &[0.5; 5]),
            Err(SynthError::BadWeights)
        ));
    }

    #[test]
    fn render_round_trip() {
        let vocab = SynthVocab::new(12).unwrap();
        let e = EventTuple {
            verb: 3,
            object_noun: 2,
            adjective: 0,
            preposition: 5,
            second_noun: 7,
            adverb: 1,
        };
        let q = e.render(&vocab, "x");
        assert_eq!(q.text(), "person slowly holds the red door into the table");
        assert_eq!(q.subject_index, Some(0));
        assert_eq!(EventTuple::from_tokens(&q.tokens, &vocab), Some(e));
    }

    #[test]
    fn bundled_lexicon_agrees_with_template_tags() {
        let vocab = SynthVocab::new(MAX_VOCAB).unwrap();
        let lex = crate::tagger::Lexicon::bundled();
        for i in 0..MAX_VOCAB {
            let e = EventTuple {
                verb: i,
                object_noun: i,
                adjective: i,
                preposition: i,
                second_noun: (i + 1) % MAX_VOCAB,
                adverb: i,
            };
            let q = e.render(&vocab, "q");
            let tagged = crate::tagger::tag_query("q", &q.text(), &lex).unwrap();
            assert_eq!(tagged, q, "{}", q.text());
        }
    }

    #[test]
    fn split_invariants() {
        let c = gen_corpus(&small(), 3).unwrap();
        let train_pairs: BTreeSet<_> = c.split(Split::Train).map(|s| (s.event.verb, s.event.object_noun)).collect();
        let train_words: BTreeSet<String> =
            c.split(Split::Train).flat_map(|s| s.query.tokens.clone()).collect();
        for s in c.split(Split::NovelComposition) {
            assert!(!train_pairs.contains(&(s.event.verb, s.event.object_noun)));
        }
        for s in c.split(Split::NovelWord) {
            assert!(s.query.tokens.iter().any(|w| !train_words.contains(w)));
        }
        for s in c.split(Split::TestTrivial) {
            assert!(train_pairs.contains(&(s.event.verb, s.event.object_noun)));
        }
        assert_eq!(c.samples.len(), 60 + 3 * 20);
    }

    #[test]
    fn deterministic() {
        let a = gen_corpus(&small(), 9).unwrap();
        let b = gen_corpus(&small(), 9).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = gen_corpus(&small(), 10).unwrap();
        assert_ne!(a.samples[0].clip_features, c.samples[0].clip_features);
    }

    #[test]
    fn bad_configs() {
        let bad = SynthConfig {
            vocab_size: 3,
            ..Default::default()
        };
        assert!(matches!(gen_corpus(&bad, 0), Err(SynthError::InsufficientVocab(3))));
        let bad = SynthConfig {
            holdout_frac: 0.5,
            ..Default::default()
        };
        assert!(matches!(gen_corpus(&bad, 0), Err(SynthError::BadHoldout(_))));
    }
}
