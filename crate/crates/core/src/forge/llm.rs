//! Mask filling through an OpenAI-compatible chat-completions endpoint.
//!
//! Every returned word is checked against the candidate subset offered in the
//! prompt. A response that fails to parse or names an out-of-subset word is
//! retried up to `max_retries` times, after which the lexicon filler produces
//! the record and `fallback` is set.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{fill_lexicon, record, ForgeError, MaskPlan, Weighting};
use crate::corpus::{self, CorpusError, Filler, Level, NegativeRecord, WriteMode};
use crate::tagger::{PrimitiveDictionary, Tag, TaggedQuery};
use crate::util::rng_for;

pub const BUNDLED_TEMPLATE: &str = include_str!("../../data/prompt_v1.txt");
pub const TEMPLATE_VERSION: &str = "prompt_v1";
const SLOTS: [&str; 3] = ["{masked_query}", "{candidates}", "{num_slots}"];
pub const DEFAULT_KEY_VAR: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct PromptConfig {
    pub template: String,
    pub dict_subset_size: usize,
    pub temperature: f64,
    pub max_retries: u32,
    pub model: String,
    pub seed: u64,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            template: BUNDLED_TEMPLATE.to_string(),
            dict_subset_size: 20,
            temperature: 0.7,
            max_retries: 2,
            model: "gpt-3.5-turbo".into(),
            seed: 0,
        }
    }
}

impl PromptConfig {
    pub fn validate(&self) -> Result<(), ForgeError> {
        for slot in SLOTS {
            let n = self.template.matches(slot).count();
            if n != 1 {
                return Err(ForgeError::BadTemplate(format!(
                    "slot {slot} appears {n} times, expected once"
                )));
            }
        }
        if self.dict_subset_size == 0 {
            return Err(ForgeError::BadTemplate("dict_subset_size must be positive".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(ForgeError::BadTemplate("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChatMessage,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EndpointError {
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("throttled after {0} attempts")]
    Throttled(u32),
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unexpected response body: {0}")]
    BadResponse(String),
}

/// A chat-completions backend returning the text of the first choice.
pub trait ChatEndpoint: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, EndpointError>;
    fn model_id(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub max_attempts: u32,
    pub base: Duration,
    pub max: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base: Duration::from_millis(500),
            max: Duration::from_secs(16),
        }
    }
}

impl Backoff {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base.saturating_mul(factor).min(self.max)
    }
}

/// Blocking HTTPS client for `POST {url}` with a bearer token.
pub struct HttpChatEndpoint {
    url: String,
    api_key: String,
    model: String,
    backoff: Backoff,
    client: reqwest::blocking::Client,
}

impl HttpChatEndpoint {
    pub fn new(url: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: api_key.into(),
            model: model.into(),
            backoff: Backoff::default(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("http client"),
        }
    }

    /// Reads the API key from the environment variable `key_var`.
    pub fn from_env(url: &str, key_var: &str, model: &str) -> Result<Self, ForgeError> {
        let key = std::env::var(key_var)
            .map_err(|_| ForgeError::AuthFailure(format!("environment variable {key_var} is not set")))?;
        Ok(Self::new(url, key, model))
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }
}

impl ChatEndpoint for HttpChatEndpoint {
    fn complete(&self, request: &ChatRequest) -> Result<String, EndpointError> {
        for attempt in 0..self.backoff.max_attempts {
            let resp = self
                .client
                .post(&self.url)
                .bearer_auth(&self.api_key)
                .json(request)
                .send()
                .map_err(|e| EndpointError::Unreachable(e.to_string()))?;
            let status = resp.status().as_u16();
            match status {
                200..=299 => {
                    let body: ChatResponse = resp
                        .json()
                        .map_err(|e| EndpointError::BadResponse(e.to_string()))?;
                    return body
                        .choices
                        .into_iter()
                        .next()
                        .map(|c| c.message.content)
                        .ok_or_else(|| EndpointError::BadResponse("no choices".into()));
                }
                401 | 403 => return Err(EndpointError::Auth(resp.text().unwrap_or_default())),
                429 | 500..=599 => {
                    let wait = resp
                        .headers()
                        .get(reqwest::header::RETRY_AFTER)
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.parse::<u64>().ok())
                        .map(Duration::from_secs)
                        .unwrap_or_else(|| self.backoff.delay(attempt))
                        .min(self.backoff.max);
                    std::thread::sleep(wait);
                }
                _ => {
                    return Err(EndpointError::Http {
                        status,
                        body: resp.text().unwrap_or_default(),
                    })
                }
            }
        }
        Err(EndpointError::Throttled(self.backoff.max_attempts))
    }

    fn model_id(&self) -> String {
        self.model.clone()
    }
}

/// Per-class candidate lists offered to the model for one attempt.
fn candidate_subsets(
    plan: &MaskPlan,
    q: &TaggedQuery,
    dict: &PrimitiveDictionary,
    cfg: &PromptConfig,
    level: Level,
    attempt: u32,
) -> HashMap<Tag, Vec<String>> {
    let mut out = HashMap::new();
    for &class in &plan.masked_classes {
        if out.contains_key(&class) {
            continue;
        }
        let originals: Vec<&str> = plan
            .masked_positions
            .iter()
            .filter(|&&p| q.tags[p] == class)
            .map(|&p| q.tokens[p].as_str())
            .collect();
        let pool: Vec<&String> = dict
            .words(class)
            .iter()
            .map(|(w, _)| w)
            .filter(|w| !originals.contains(&w.as_str()))
            .collect();
        let mut rng = rng_for(
            cfg.seed,
            &["subset", &q.query_id, &format!("{level:?}"), class.as_str(), &attempt.to_string()],
        );
        let subset = pool
            .choose_multiple(&mut rng, cfg.dict_subset_size.min(pool.len()))
            .map(|w| w.to_string())
            .collect();
        out.insert(class, subset);
    }
    out
}

/// Renders the prompt; slots are numbered in sentence order.
pub fn render_prompt(
    cfg: &PromptConfig,
    plan: &MaskPlan,
    q: &TaggedQuery,
    subsets: &HashMap<Tag, Vec<String>>,
) -> String {
    let slots = plan.sorted_positions();
    let mut masked = q.tokens.clone();
    let mut cand_lines = Vec::new();
    for (k, &pos) in slots.iter().enumerate() {
        masked[pos] = format!("[MASK{}]", k + 1);
        let class = q.tags[pos];
        cand_lines.push(format!(
            "[MASK{}] ({}, replacing \"{}\"): {}",
            k + 1,
            class,
            q.tokens[pos],
            subsets.get(&class).map(|v| v.join(", ")).unwrap_or_default()
        ));
    }
    cfg.template
        .replace("{masked_query}", &masked.join(" "))
        .replace("{candidates}", &cand_lines.join("\n"))
        .replace("{num_slots}", &slots.len().to_string())
}

/// Extracts the words after the last `ANSWER:` marker, one per `|`-separated field.
pub fn parse_answer(text: &str, expected: usize) -> Option<Vec<String>> {
    let line = text
        .lines()
        .rev()
        .find(|l| l.to_ascii_uppercase().contains("ANSWER:"))?;
    let idx = line.to_ascii_uppercase().find("ANSWER:")? + "ANSWER:".len();
    let words: Vec<String> = line[idx..]
        .split('|')
        .map(|w| {
            w.trim()
                .trim_matches(|c: char| !c.is_alphanumeric() && c != '\'' && c != '-')
                .to_lowercase()
        })
        .collect();
    if words.len() != expected || words.iter().any(|w| w.is_empty() || w.contains(' ')) {
        return None;
    }
    Some(words)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmOutcome {
    pub record: NegativeRecord,
    /// Endpoint calls made; 0 for a cache hit.
    pub attempts: u32,
    pub cached: bool,
}

pub fn fill_llm(
    plan: &MaskPlan,
    q: &TaggedQuery,
    level: Level,
    dict: &PrimitiveDictionary,
    cfg: &PromptConfig,
    endpoint: &dyn ChatEndpoint,
) -> Result<LlmOutcome, ForgeError> {
    cfg.validate()?;
    let slots = plan.sorted_positions();
    let model_id = Some(endpoint.model_id());
    let mut attempts = 0;
    for attempt in 0..=cfg.max_retries {
        let subsets = candidate_subsets(plan, q, dict, cfg, level, attempt);
        let request = ChatRequest {
            model: cfg.model.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: render_prompt(cfg, plan, q, &subsets),
            }],
            temperature: cfg.temperature,
        };
        attempts += 1;
        let reply = match endpoint.complete(&request) {
            Ok(text) => text,
            Err(EndpointError::Unreachable(m)) => return Err(ForgeError::EndpointUnreachable(m)),
            Err(EndpointError::Auth(m)) => return Err(ForgeError::AuthFailure(m)),
            Err(_) => continue,
        };
        let Some(words) = parse_answer(&reply, slots.len()) else {
            continue;
        };
        let valid = slots.iter().zip(&words).all(|(&pos, w)| {
            subsets
                .get(&q.tags[pos])
                .is_some_and(|s| s.iter().any(|c| c == w))
        });
        if valid {
            let mut tokens = q.tokens.clone();
            for (&pos, w) in slots.iter().zip(words) {
                tokens[pos] = w;
            }
            return Ok(LlmOutcome {
                record: record(plan, level, tokens, Filler::Llm, model_id, false),
                attempts,
                cached: false,
            });
        }
    }
    let mut fb = fill_lexicon(plan, q, level, dict, cfg.seed, Weighting::Uniform)?;
    fb.filler = Filler::Llm;
    fb.model_id = model_id;
    fb.fallback = true;
    Ok(LlmOutcome {
        record: fb,
        attempts,
        cached: false,
    })
}

/// On-disk negative cache consulted before any endpoint call.
#[derive(Debug, Default)]
pub struct NegativeCache {
    path: Option<PathBuf>,
    records: HashMap<(String, Level, Filler), NegativeRecord>,
    pending: Vec<NegativeRecord>,
}

impl NegativeCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, CorpusError> {
        let existing = if path.exists() {
            corpus::load_negatives(path)?
        } else {
            Vec::new()
        };
        Ok(Self {
            path: Some(path.to_path_buf()),
            records: existing.into_iter().map(|r| (r.key(), r)).collect(),
            pending: Vec::new(),
        })
    }

    pub fn get(&self, query_id: &str, level: Level, filler: Filler) -> Option<&NegativeRecord> {
        self.records.get(&(query_id.to_string(), level, filler))
    }

    pub fn insert(&mut self, rec: NegativeRecord) {
        let key = rec.key();
        if !self.records.contains_key(&key) {
            self.pending.push(rec.clone());
            self.records.insert(key, rec);
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends records inserted since the last flush; returns how many were written.
    pub fn flush(&mut self) -> Result<usize, CorpusError> {
        let Some(path) = &self.path else {
            self.pending.clear();
            return Ok(0);
        };
        let n = corpus::save_negatives(&self.pending, path, WriteMode::Append { strict: false })?;
        self.pending.clear();
        Ok(n)
    }
}

pub struct LlmJob<'a> {
    pub plan: &'a MaskPlan,
    pub query: &'a TaggedQuery,
    pub level: Level,
}

/// Fills many masks with at most `in_flight` concurrent endpoint calls.
/// Cache hits skip the endpoint; fresh results are added to the cache and
/// flushed once at the end. Output order follows `jobs`.
pub fn fill_llm_many(
    jobs: &[LlmJob<'_>],
    dict: &PrimitiveDictionary,
    cfg: &PromptConfig,
    endpoint: &dyn ChatEndpoint,
    cache: &mut NegativeCache,
    in_flight: usize,
) -> Result<Vec<LlmOutcome>, ForgeError> {
    use rayon::prelude::*;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(in_flight.max(1))
        .build()
        .expect("thread pool");
    let snapshot: &NegativeCache = cache;
    let results: Vec<Result<LlmOutcome, ForgeError>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                if let Some(hit) = snapshot.get(&job.query.query_id, job.level, Filler::Llm) {
                    return Ok(LlmOutcome {
                        record: hit.clone(),
                        attempts: 0,
                        cached: true,
                    });
                }
                fill_llm(job.plan, job.query, job.level, dict, cfg, endpoint)
            })
            .collect()
    });
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        let outcome = r?;
        if !outcome.cached {
            cache.insert(outcome.record.clone());
        }
        out.push(outcome);
    }
    cache
        .flush()
        .map_err(|e| ForgeError::Cache(e.to_string()))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_template_has_every_slot_once() {
        PromptConfig::default().validate().unwrap();
        let bad = PromptConfig {
            template: "{masked_query} {masked_query} {candidates} {num_slots}".into(),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn parses_answer_line() {
        assert_eq!(
            parse_answer("sure!\nANSWER: takes | Cup.", 2),
            Some(vec!["takes".to_string(), "cup".to_string()])
        );
        assert_eq!(parse_answer("answer: takes", 2), None);
        assert_eq!(parse_answer("no marker here", 1), None);
        assert_eq!(parse_answer("ANSWER: two words", 1), None);
    }

    #[test]
    fn backoff_grows_and_caps() {
        let b = Backoff {
            max_attempts: 5,
            base: Duration::from_millis(100),
            max: Duration::from_millis(350),
        };
        assert_eq!(b.delay(0), Duration::from_millis(100));
        assert_eq!(b.delay(1), Duration::from_millis(200));
        assert_eq!(b.delay(2), Duration::from_millis(350));
        assert_eq!(b.delay(40), Duration::from_millis(350));
    }

    #[test]
    fn chat_request_wire_shape() {
        let req = ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage { role: "user".into(), content: "hi".into() }],
            temperature: 0.0,
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"model":"m","messages":[{"role":"user","content":"hi"}],"temperature":0.0}"#
        );
    }
}
