//! Flat `key = value` run configuration with namespaced keys.
//!
//! Layering is defaults, then the config file, then `--set` overrides.
//! Credentials are never read from here: the LLM key lives in the
//! environment variable named by `llm.key_env`.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::Filler;
use crate::experiment::ForgeSettings;
use crate::forge::{PromptConfig, Weighting};
use crate::model::ModelConfig;
use crate::objective::ObjectiveConfig;
use crate::ranking::FineMode;
use crate::synth::SynthConfig;
use crate::train::TrainConfig;
use crate::util::fingerprint;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config file {0} not found")]
    MissingFile(PathBuf),
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line_no}: expected `key = value`")]
    Syntax { line_no: usize },
    #[error("{0:?} looks like a credential; API keys are read from the environment only")]
    Secret(String),
    #[error("reading config: {0}")]
    Io(String),
}

impl ConfigError {
    /// The offending key, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey(k) | ConfigError::Secret(k) => Some(k),
            ConfigError::BadValue { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridChoice {
    Coarse,
    Fine,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmSettings {
    pub endpoint: Option<String>,
    pub model: String,
    pub subset_size: usize,
    pub temperature: f64,
    pub max_retries: u32,
    pub in_flight: usize,
    /// Name of the environment variable holding the API key.
    pub key_env: String,
}

impl Default for LlmSettings {
    fn default() -> Self {
        let p = PromptConfig::default();
        Self {
            endpoint: None,
            model: p.model,
            subset_size: p.dict_subset_size,
            temperature: p.temperature,
            max_retries: p.max_retries,
            in_flight: 4,
            key_env: crate::forge::llm::DEFAULT_KEY_VAR.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub forge: ForgeSettings,
    pub filler: Filler,
    pub objective: ObjectiveConfig,
    pub train: TrainConfig,
    pub d_e: usize,
    pub d_h: usize,
    pub n_queries: usize,
    pub synth: SynthConfig,
    pub synth_seed: u64,
    pub llm: LlmSettings,
    pub workers: usize,
    pub grid: GridChoice,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::new(1);
        Self {
            seeds: vec![0],
            forge: ForgeSettings::default(),
            filler: Filler::Lexicon,
            objective: ObjectiveConfig::default(),
            train: TrainConfig::default(),
            d_e: m.d_e,
            d_h: m.d_h,
            n_queries: m.n_queries,
            synth: SynthConfig::default(),
            synth_seed: 0,
            llm: LlmSettings::default(),
            workers: 1,
            grid: GridChoice::All,
        }
    }
}

const SECRET_WORDS: [&str; 5] = ["api_key", "apikey", "secret", "token", "password"];

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| bad(key, v, e.to_string()))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.split(',').map(|x| num(key, x.trim())).collect()
}

fn fixed<const N: usize>(key: &str, v: &str) -> Result<[f64; N], ConfigError> {
    let xs: Vec<f64> = list(key, v)?;
    xs.try_into()
        .map_err(|x: Vec<f64>| bad(key, v, format!("expected {N} values, got {}", x.len())))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let o = &self.objective;
        let s = &self.synth;
        let terms: Vec<usize> = (0..4).filter(|&k| o.fine.use_terms[k]).map(|k| k + 1).collect();
        vec![
            ("seeds", join(&self.seeds)),
            ("forge.ratios", join(&self.forge.ratios)),
            ("forge.weighting", weighting_str(self.forge.weighting).into()),
            ("forge.filler", filler_str(self.filler).into()),
            ("forge.seed", self.forge.seed.to_string()),
            ("loss.h1", o.coarse.h1.to_string()),
            ("loss.h2", o.coarse.h2.to_string()),
            ("loss.q", o.coarse.q.to_string()),
            ("loss.intra", o.coarse.use_intra.to_string()),
            ("loss.inter", o.coarse.use_inter.to_string()),
            ("loss.margins", join(&o.fine.margins)),
            ("loss.mode", mode_str(o.fine.mode).into()),
            ("loss.fine_terms", join(&terms)),
            ("loss.alpha", o.alpha.to_string()),
            ("loss.beta", o.beta.to_string()),
            ("loss.replace_saliency", o.replace_saliency.to_string()),
            ("loss.l1", o.base.l1.to_string()),
            ("loss.giou", o.base.giou.to_string()),
            ("loss.cls", o.base.cls.to_string()),
            ("loss.neg", o.base.neg.to_string()),
            ("loss.cont", o.base.cont.to_string()),
            ("loss.tau", o.base.tau.to_string()),
            ("train.lr", self.train.lr.to_string()),
            ("train.epochs", self.train.epochs.to_string()),
            ("train.batch", self.train.batch.to_string()),
            ("train.clip_norm", self.train.clip_norm.to_string()),
            ("model.d_e", self.d_e.to_string()),
            ("model.d_h", self.d_h.to_string()),
            ("model.n_queries", self.n_queries.to_string()),
            ("synth.seed", self.synth_seed.to_string()),
            ("synth.vocab_size", s.vocab_size.to_string()),
            ("synth.n_train", s.n_train.to_string()),
            ("synth.n_test", s.n_test.to_string()),
            ("synth.num_clips", s.num_clips.to_string()),
            ("synth.clip_len_s", s.clip_len_s.to_string()),
            ("synth.d_v", s.d_v.to_string()),
            ("synth.noise", s.noise.to_string()),
            ("synth.emb_std", s.emb_std.to_string()),
            ("synth.holdout_frac", s.holdout_frac.to_string()),
            ("synth.heldout_words", s.heldout_words.to_string()),
            ("synth.min_span", s.min_span.to_string()),
            ("synth.max_span", s.max_span.to_string()),
            ("synth.distractor_len", s.distractor_len.to_string()),
            ("llm.endpoint", self.llm.endpoint.clone().unwrap_or_default()),
            ("llm.model", self.llm.model.clone()),
            ("llm.subset_size", self.llm.subset_size.to_string()),
            ("llm.temperature", self.llm.temperature.to_string()),
            ("llm.max_retries", self.llm.max_retries.to_string()),
            ("llm.in_flight", self.llm.in_flight.to_string()),
            ("llm.key_env", self.llm.key_env.clone()),
            ("ablate.workers", self.workers.to_string()),
            ("ablate.grid", grid_str(self.grid).into()),
        ]
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let lower = key.to_ascii_lowercase();
        if SECRET_WORDS.iter().any(|w| lower.contains(w)) {
            return Err(ConfigError::Secret(key.to_string()));
        }
        let v = v.trim();
        let o = &mut self.objective;
        let s = &mut self.synth;
        match key {
            "seeds" => {
                let xs: Vec<u64> = list(key, v)?;
                if xs.is_empty() {
                    return Err(bad(key, v, "at least one seed"));
                }
                self.seeds = xs;
            }
            "forge.ratios" => self.forge.ratios = fixed::<3>(key, v)?,
            "forge.weighting" => {
                self.forge.weighting = match v {
                    "uniform" => Weighting::Uniform,
                    "frequency" => Weighting::Frequency,
                    _ => return Err(bad(key, v, "uniform or frequency")),
                }
            }
            "forge.filler" => {
                self.filler = match v {
                    "lexicon" => Filler::Lexicon,
                    "llm" => Filler::Llm,
                    _ => return Err(bad(key, v, "lexicon or llm")),
                }
            }
            "forge.seed" => self.forge.seed = num(key, v)?,
            "loss.h1" => o.coarse.h1 = num(key, v)?,
            "loss.h2" => o.coarse.h2 = num(key, v)?,
            "loss.q" => {
                o.coarse.q = num(key, v)?;
                if o.coarse.q == 0 {
                    return Err(bad(key, v, "must be positive"));
                }
            }
            "loss.intra" => o.coarse.use_intra = num(key, v)?,
            "loss.inter" => o.coarse.use_inter = num(key, v)?,
            "loss.margins" => o.fine.margins = fixed::<4>(key, v)?,
            "loss.mode" => {
                o.fine.mode = match v {
                    "relative" => FineMode::Relative,
                    "absolute" => FineMode::Absolute,
                    _ => return Err(bad(key, v, "relative or absolute")),
                }
            }
            "loss.fine_terms" => {
                let mut terms = [false; 4];
                if !v.is_empty() && v != "none" {
                    for k in list::<usize>(key, v)? {
                        if !(1..=4).contains(&k) {
                            return Err(bad(key, v, "terms are numbered 1..4"));
                        }
                        terms[k - 1] = true;
                    }
                }
                o.fine.use_terms = terms;
            }
            "loss.alpha" => o.alpha = num(key, v)?,
            "loss.beta" => o.beta = num(key, v)?,
            "loss.replace_saliency" => o.replace_saliency = num(key, v)?,
            "loss.l1" => o.base.l1 = num(key, v)?,
            "loss.giou" => o.base.giou = num(key, v)?,
            "loss.cls" => o.base.cls = num(key, v)?,
            "loss.neg" => o.base.neg = num(key, v)?,
            "loss.cont" => o.base.cont = num(key, v)?,
            "loss.tau" => o.base.tau = num(key, v)?,
            "train.lr" => self.train.lr = num(key, v)?,
            "train.epochs" => self.train.epochs = num(key, v)?,
            "train.batch" => self.train.batch = num(key, v)?,
            "train.clip_norm" => self.train.clip_norm = num(key, v)?,
            "model.d_e" => self.d_e = num(key, v)?,
            "model.d_h" => self.d_h = num(key, v)?,
            "model.n_queries" => self.n_queries = num(key, v)?,
            "synth.seed" => self.synth_seed = num(key, v)?,
            "synth.vocab_size" => s.vocab_size = num(key, v)?,
            "synth.n_train" => s.n_train = num(key, v)?,
            "synth.n_test" => s.n_test = num(key, v)?,
            "synth.num_clips" => s.num_clips = num(key, v)?,
            "synth.clip_len_s" => s.clip_len_s = num(key, v)?,
            "synth.d_v" => s.d_v = num(key, v)?,
            "synth.noise" => s.noise = num(key, v)?,
            "synth.emb_std" => s.emb_std = num(key, v)?,
            "synth.holdout_frac" => s.holdout_frac = num(key, v)?,
            "synth.heldout_words" => s.heldout_words = num(key, v)?,
            "synth.min_span" => s.min_span = num(key, v)?,
            "synth.max_span" => s.max_span = num(key, v)?,
            "synth.distractor_len" => s.distractor_len = num(key, v)?,
            "llm.endpoint" => self.llm.endpoint = (!v.is_empty()).then(|| v.to_string()),
            "llm.model" => self.llm.model = v.to_string(),
            "llm.subset_size" => self.llm.subset_size = num(key, v)?,
            "llm.temperature" => self.llm.temperature = num(key, v)?,
            "llm.max_retries" => self.llm.max_retries = num(key, v)?,
            "llm.in_flight" => self.llm.in_flight = num(key, v)?,
            "llm.key_env" => self.llm.key_env = v.to_string(),
            "ablate.workers" => self.workers = num(key, v)?,
            "ablate.grid" => {
                self.grid = match v {
                    "coarse" => GridChoice::Coarse,
                    "fine" => GridChoice::Fine,
                    "all" => GridChoice::All,
                    _ => return Err(bad(key, v, "coarse, fine or all")),
                }
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line_no: idx + 1 })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ConfigError::MissingFile(path.to_path_buf()),
            _ => ConfigError::Io(e.to_string()),
        })?;
        self.apply_text(&text)
    }

    /// Defaults, then `file`, then `overrides` (`key=value` each).
    pub fn layered(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(p) = file {
            cfg.apply_file(p)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| bad(o, "", "expected key=value"))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    /// Canonical text: every key, one per line. Parsing it back gives the same config.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.to_text())
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            d_v: self.synth.d_v,
            d_e: self.d_e,
            d_h: self.d_h,
            n_queries: self.n_queries,
            vocab_size,
        }
    }

    pub fn prompt_config(&self) -> PromptConfig {
        PromptConfig {
            dict_subset_size: self.llm.subset_size,
            temperature: self.llm.temperature,
            max_retries: self.llm.max_retries,
            model: self.llm.model.clone(),
            seed: self.forge.seed,
            ..PromptConfig::default()
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.train }
    }
}

fn weighting_str(w: Weighting) -> &'static str {
    match w {
        Weighting::Uniform => "uniform",
        Weighting::Frequency => "frequency",
    }
}

fn filler_str(f: Filler) -> &'static str {
    match f {
        Filler::Lexicon => "lexicon",
        Filler::Llm => "llm",
    }
}

fn mode_str(m: FineMode) -> &'static str {
    match m {
        FineMode::Relative => "relative",
        FineMode::Absolute => "absolute",
    }
}

fn grid_str(g: GridChoice) -> &'static str {
    match g {
        GridChoice::Coarse => "coarse",
        GridChoice::Fine => "fine",
        GridChoice::All => "all",
    }
}
