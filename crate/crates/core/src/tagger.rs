//! Lexicon-plus-suffix-rules part-of-speech tagging over the five primitive
//! classes, and the primitive dictionary built from tagged training queries.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("query is empty after whitespace normalization")]
    EmptyQuery,
    #[error("cannot build a dictionary from an empty corpus")]
    EmptyCorpus,
    #[error("lexicon line {line_no}: {reason}")]
    BadLexicon { line_no: usize, reason: String },
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("dictionary file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tag {
    Verb,
    Noun,
    Adj,
    Prep,
    Adv,
    Other,
}

impl Tag {
    /// Primitive classes in masking-importance order.
    pub const PRIMITIVES: [Tag; 5] = [Tag::Verb, Tag::Noun, Tag::Adj, Tag::Prep, Tag::Adv];

    pub fn is_primitive(&self) -> bool {
        *self != Tag::Other
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Tag::Verb => "VERB",
            Tag::Noun => "NOUN",
            Tag::Adj => "ADJ",
            Tag::Prep => "PREP",
            Tag::Adv => "ADV",
            Tag::Other => "OTHER",
        }
    }

    /// Position in [`Tag::PRIMITIVES`]; `None` for `Other`.
    pub fn importance(&self) -> Option<usize> {
        Tag::PRIMITIVES.iter().position(|t| t == self)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = TaggerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "VERB" => Ok(Tag::Verb),
            "NOUN" => Ok(Tag::Noun),
            "ADJ" => Ok(Tag::Adj),
            "PREP" | "ADP" => Ok(Tag::Prep),
            "ADV" => Ok(Tag::Adv),
            "OTHER" => Ok(Tag::Other),
            other => Err(TaggerError::UnknownTag(other.to_string())),
        }
    }
}

const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.tsv");

const CLOSED_PREPOSITIONS: &[&str] = &[
    "aboard", "about", "above", "across", "after", "against", "along", "amid", "among", "around",
    "at", "before", "behind", "below", "beneath", "beside", "besides", "between", "beyond", "by",
    "despite", "down", "during", "except", "for", "from", "in", "inside", "into", "near", "of",
    "off", "on", "onto", "out", "outside", "over", "past", "since", "through", "throughout",
    "to", "toward", "towards", "under", "underneath", "until", "up", "upon", "with", "within",
    "without",
];

/// Word to most-frequent-class map. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, Tag>,
}

impl Lexicon {
    /// The lexicon shipped in `data/lexicon.tsv`.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon is well-formed")
    }

    pub fn load(path: &Path) -> Result<Self, TaggerError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses `word<TAB>class` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, TaggerError> {
        let mut entries = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, class) = line.split_once('\t').ok_or_else(|| TaggerError::BadLexicon {
                line_no: idx + 1,
                reason: "expected word<TAB>class".into(),
            })?;
            let tag = class.parse().map_err(|_| TaggerError::BadLexicon {
                line_no: idx + 1,
                reason: format!("unknown class {class:?}"),
            })?;
            entries.insert(word.trim().to_lowercase(), tag);
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, word: &str, tag: Tag) {
        self.entries.insert(word.to_lowercase(), tag);
    }

    pub fn get(&self, word: &str) -> Option<Tag> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn is_verb(&self, stem: &str) -> bool {
        !stem.is_empty() && self.get(stem) == Some(Tag::Verb)
    }

    /// Tag for a single lowercase token: lexicon, then suffix rules, then `Other`.
    pub fn classify(&self, word: &str) -> Tag {
        if let Some(t) = self.get(word) {
            return t;
        }
        if CLOSED_PREPOSITIONS.contains(&word) {
            return Tag::Prep;
        }
        if word.len() > 3 && word.ends_with("ly") {
            return Tag::Adv;
        }
        if let Some(stem) = word.strip_suffix("ing") {
            if verb_stems(stem).iter().any(|s| self.is_verb(s)) {
                return Tag::Verb;
            }
        }
        if let Some(stem) = word.strip_suffix("ed") {
            let mut cands = verb_stems(stem);
            cands.push(format!("{stem}e"));
            if let Some(y) = stem.strip_suffix('i') {
                cands.push(format!("{y}y"));
            }
            if cands.iter().any(|s| self.is_verb(s)) {
                return Tag::Verb;
            }
        }
        if let Some(stem) = word.strip_suffix('s') {
            let mut cands = vec![stem.to_string()];
            if let Some(es) = stem.strip_suffix('e') {
                cands.push(es.to_string());
                if let Some(y) = es.strip_suffix('i') {
                    cands.push(format!("{y}y"));
                }
            }
            for c in &cands {
                match self.get(c) {
                    Some(t @ (Tag::Noun | Tag::Verb)) => return t,
                    _ => {}
                }
            }
        }
        Tag::Other
    }
}

/// Candidate base forms of an `-ing`/`-ed` stem: as-is, with a silent `e`,
/// and with a doubled final consonant removed.
fn verb_stems(stem: &str) -> Vec<String> {
    let mut out = vec![stem.to_string(), format!("{stem}e")];
    let b = stem.as_bytes();
    if b.len() >= 2 && b[b.len() - 1] == b[b.len() - 2] {
        out.push(stem[..stem.len() - 1].to_string());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedQuery {
    pub query_id: String,
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
    pub subject_index: Option<usize>,
}

impl TaggedQuery {
    /// Builds a query from pre-assigned tags, deriving the subject with the
    /// same rule as [`tag_query`].
    pub fn from_parts(query_id: impl Into<String>, tokens: Vec<String>, tags: Vec<Tag>) -> Self {
        assert_eq!(tokens.len(), tags.len(), "tokens and tags must align");
        let subject_index = subject_of(&tags);
        Self {
            query_id: query_id.into(),
            tokens,
            tags,
            subject_index,
        }
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn subject_of(tags: &[Tag]) -> Option<usize> {
    let first_verb = tags.iter().position(|t| *t == Tag::Verb)?;
    tags[..first_verb].iter().position(|t| *t == Tag::Noun)
}

/// Lowercases, splits on whitespace and strips surrounding punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'')
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

pub fn tag_query(
    query_id: impl Into<String>,
    text: &str,
    lexicon: &Lexicon,
) -> Result<TaggedQuery, TaggerError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(TaggerError::EmptyQuery);
    }
    let tags = tokens.iter().map(|t| lexicon.classify(t)).collect();
    Ok(TaggedQuery::from_parts(query_id, tokens, tags))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntries {
    pub class: Tag,
    pub words: Vec<(String, usize)>,
}

/// Per-class word counts over a tagged corpus. Classes are always the five
/// primitives in importance order; words within a class are sorted by
/// descending count, then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitiveDictionary {
    pub source_split: String,
    pub classes: Vec<ClassEntries>,
}

impl PrimitiveDictionary {
    pub fn words(&self, class: Tag) -> &[(String, usize)] {
        self.classes
            .iter()
            .find(|c| c.class == class)
            .map(|c| c.words.as_slice())
            .unwrap_or(&[])
    }

    pub fn contains(&self, class: Tag, word: &str) -> bool {
        self.words(class).iter().any(|(w, _)| w == word)
    }

    pub fn total_count(&self) -> usize {
        self.classes
            .iter()
            .flat_map(|c| c.words.iter().map(|(_, n)| *n))
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dictionary serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<(), TaggerError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TaggerError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn build_dictionary(
    queries: &[TaggedQuery],
    source_split: &str,
) -> Result<PrimitiveDictionary, TaggerError> {
    if queries.is_empty() {
        return Err(TaggerError::EmptyCorpus);
    }
    let mut counts: BTreeMap<Tag, BTreeMap<&str, usize>> = BTreeMap::new();
    for q in queries {
        for (tok, tag) in q.tokens.iter().zip(&q.tags) {
            if tag.is_primitive() {
                *counts.entry(*tag).or_default().entry(tok).or_default() += 1;
            }
        }
    }
    let classes = Tag::PRIMITIVES
        .iter()
        .map(|&class| {
            let mut words: Vec<(String, usize)> = counts
                .get(&class)
                .map(|m| m.iter().map(|(w, n)| (w.to_string(), *n)).collect())
                .unwrap_or_default();
            words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            ClassEntries { class, words }
        })
        .collect();
    Ok(PrimitiveDictionary {
        source_split: source_split.to_string(),
        classes,
    })
}
