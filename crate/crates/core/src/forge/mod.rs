//! Hierarchical hard-negative construction.
//!
//! A positive query is masked progressively (VERB, then NOUN, ADJ, PREP, ADV,
//! left to right within a class, subject last) at three increasing ratios.
//! Each mask is filled either by sampling the training dictionary
//! ([`fill_lexicon`]) or by asking a chat-completions endpoint for a plausible
//! replacement ([`fill_llm`]). Easy negatives come from other queries in the
//! same mini-batch.

mod easy;
mod lexicon_fill;
pub mod llm;
mod mask;

pub use easy::sample_easy_negative;
pub use lexicon_fill::{fill_lexicon, Weighting};
pub use llm::{fill_llm, ChatEndpoint, EndpointError, HttpChatEndpoint, LlmOutcome, PromptConfig};
pub use mask::{build_hierarchy, mask_count, plan_masks, MaskPlan};

use thiserror::Error;

use crate::corpus::{Filler, Level, NegativeRecord};
use crate::tagger::{Tag, TaggedQuery};

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("query {0} has no primitive tokens")]
    NoPrimitives(String),
    #[error("masking ratios {0:?} must be strictly increasing and inside (0, 1)")]
    BadRatios([f64; 3]),
    #[error("no same-class alternative for {0}")]
    ExhaustedClass(Tag),
    #[error("batch of {0} is too small to draw an in-batch negative")]
    BatchTooSmall(usize),
    #[error("endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("endpoint rejected credentials: {0}")]
    AuthFailure(String),
    #[error("prompt template: {0}")]
    BadTemplate(String),
    #[error("negative cache: {0}")]
    Cache(String),
}

/// Three nested negatives for one positive query plus its in-batch easy negative.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeHierarchy {
    pub positive: TaggedQuery,
    pub hn: [NegativeRecord; 3],
    pub easy: String,
}

impl NegativeHierarchy {
    pub fn new(
        positive: TaggedQuery,
        hn: [NegativeRecord; 3],
        easy: String,
    ) -> Result<Self, ForgeError> {
        if easy == positive.query_id {
            return Err(ForgeError::BatchTooSmall(1));
        }
        Ok(Self { positive, hn, easy })
    }

    /// True when hn1's masked positions are within hn2's, and hn2's within hn3's.
    pub fn is_nested(&self) -> bool {
        self.hn.windows(2).all(|w| {
            w[0].masked_positions
                .iter()
                .all(|p| w[1].masked_positions.contains(p))
        })
    }
}

/// Forges the three lexicon-filled levels for one query.
pub fn forge_lexicon_hierarchy(
    q: &TaggedQuery,
    ratios: [f64; 3],
    dict: &crate::tagger::PrimitiveDictionary,
    seed: u64,
    weighting: Weighting,
) -> Result<[NegativeRecord; 3], ForgeError> {
    let plans = build_hierarchy(q, ratios)?;
    let mut out = Vec::with_capacity(3);
    for (plan, level) in plans.iter().zip(Level::ALL) {
        out.push(fill_lexicon(plan, q, level, dict, seed, weighting)?);
    }
    Ok(out.try_into().expect("three levels"))
}

/// Token positions at which two equal-length token sequences differ.
pub fn token_diff(a: &[String], b: &[String]) -> Vec<usize> {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i)
        .collect()
}

pub(crate) fn record(
    plan: &MaskPlan,
    level: Level,
    tokens: Vec<String>,
    filler: Filler,
    model_id: Option<String>,
    fallback: bool,
) -> NegativeRecord {
    NegativeRecord {
        query_id: plan.query_id.clone(),
        level,
        masked_positions: plan.masked_positions.clone(),
        negative_text: tokens.join(" "),
        filler,
        model_id,
        fallback,
        created_at: 0,
    }
}
