use rand::distributions::WeightedIndex;
use rand::prelude::*;
use serde::{Deserialize, Serialize};

use super::{record, ForgeError, MaskPlan};
use crate::corpus::{Filler, Level, NegativeRecord};
use crate::tagger::{PrimitiveDictionary, TaggedQuery};
use crate::util::rng_for;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    Frequency,
}

/// Replaces every masked token by a different word of the same class drawn
/// from the dictionary.
pub fn fill_lexicon(
    plan: &MaskPlan,
    q: &TaggedQuery,
    level: Level,
    dict: &PrimitiveDictionary,
    seed: u64,
    weighting: Weighting,
) -> Result<NegativeRecord, ForgeError> {
    let level_tag = format!("{level:?}");
    let mut rng = rng_for(seed, &["lexicon", &q.query_id, &level_tag]);
    let mut tokens = q.tokens.clone();
    for (&pos, &class) in plan.masked_positions.iter().zip(&plan.masked_classes) {
        let original = &q.tokens[pos];
        let cands: Vec<&(String, usize)> =
            dict.words(class).iter().filter(|(w, _)| w != original).collect();
        if cands.is_empty() {
            return Err(ForgeError::ExhaustedClass(class));
        }
        let pick = match weighting {
            Weighting::Uniform => rng.gen_range(0..cands.len()),
            Weighting::Frequency => WeightedIndex::new(cands.iter().map(|(_, n)| *n))
                .expect("dictionary counts are positive")
                .sample(&mut rng),
        };
        tokens[pos] = cands[pick].0.clone();
    }
    Ok(record(plan, level, tokens, Filler::Lexicon, None, false))
}
