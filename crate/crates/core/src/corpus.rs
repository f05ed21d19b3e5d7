//! Line-delimited JSON persistence for grounding annotations and the
//! negative-query cache.
//!
//! Annotation line:
//!
//! ```text
//! {"video_id":"v0001","duration_s":32.0,"span":[8.0,16.0],"query":"person opens the door","split":"train"}
//! ```
//!
//! Negative cache line:
//!
//! ```text
//! {"query_id":"q1","level":"hn1","masked_positions":[1],"text":"person takes the towel","filler":"lexicon","model_id":null,"fallback":false,"created_at":0}
//! ```

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::span::MomentSpan;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("line {line_no}: malformed record: {reason}")]
    MalformedRecord { line_no: usize, reason: String },
    #[error("line {line_no}: span out of range")]
    SpanOutOfRange { line_no: usize },
    #[error("duplicate negative key ({query_id}, {level:?}, {filler:?})")]
    DuplicateKey {
        query_id: String,
        level: Level,
        filler: Filler,
    },
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    TestTrivial,
    NovelComposition,
    NovelWord,
}

impl Split {
    pub const ALL: [Split; 4] = [
        Split::Train,
        Split::TestTrivial,
        Split::NovelComposition,
        Split::NovelWord,
    ];
    pub const TEST: [Split; 3] = [Split::TestTrivial, Split::NovelComposition, Split::NovelWord];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TestTrivial => "test_trivial",
            Split::NovelComposition => "novel_composition",
            Split::NovelWord => "novel_word",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub query_id: String,
    pub video_id: String,
    pub duration_s: f64,
    pub span: MomentSpan,
    pub query_text: String,
    pub split: Split,
}

#[derive(Serialize, Deserialize)]
struct AnnotationLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    query_id: Option<String>,
    video_id: String,
    duration_s: f64,
    span: [f64; 2],
    query: String,
    split: Split,
}

impl Annotation {
    fn to_line(&self) -> AnnotationLine {
        AnnotationLine {
            query_id: Some(self.query_id.clone()),
            video_id: self.video_id.clone(),
            duration_s: self.duration_s,
            span: [self.span.start, self.span.end],
            query: self.query_text.clone(),
            split: self.split,
        }
    }
}

/// Reads an annotation file, failing on the first malformed line.
///
/// Records without an explicit `query_id` get `"{video_id}#{index}"`, where
/// `index` is the 0-based record position in the file.
pub fn load_annotations(path: &Path) -> Result<Vec<Annotation>, CorpusError> {
    let file = open_existing(path)?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationLine =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                line_no,
                reason: e.to_string(),
            })?;
        if rec.query.trim().is_empty() {
            return Err(CorpusError::MalformedRecord {
                line_no,
                reason: "empty query".into(),
            });
        }
        if !(rec.duration_s > 0.0 && rec.duration_s.is_finite()) {
            return Err(CorpusError::MalformedRecord {
                line_no,
                reason: format!("duration_s must be > 0, got {}", rec.duration_s),
            });
        }
        let span = MomentSpan::new(rec.span[0], rec.span[1])
            .map_err(|_| CorpusError::SpanOutOfRange { line_no })?;
        span.check_within(rec.duration_s)
            .map_err(|_| CorpusError::SpanOutOfRange { line_no })?;
        let query_id = rec
            .query_id
            .unwrap_or_else(|| format!("{}#{}", rec.video_id, out.len()));
        out.push(Annotation {
            query_id,
            video_id: rec.video_id,
            duration_s: rec.duration_s,
            span,
            query_text: rec.query,
            split: rec.split,
        });
    }
    Ok(out)
}

pub fn save_annotations(records: &[Annotation], path: &Path) -> Result<usize, CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        let line = serde_json::to_string(&r.to_line()).expect("annotation serializes");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(records.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Hn1,
    Hn2,
    Hn3,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Hn1, Level::Hn2, Level::Hn3];

    pub fn index(&self) -> usize {
        match self {
            Level::Hn1 => 0,
            Level::Hn2 => 1,
            Level::Hn3 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filler {
    Lexicon,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeRecord {
    pub query_id: String,
    pub level: Level,
    pub masked_positions: Vec<usize>,
    #[serde(rename = "text")]
    pub negative_text: String,
    pub filler: Filler,
    pub model_id: Option<String>,
    /// Set when an LLM fill was rejected and the lexicon filler produced the text.
    #[serde(default)]
    pub fallback: bool,
    /// Unix seconds.
    #[serde(default)]
    pub created_at: u64,
}

impl NegativeRecord {
    pub fn key(&self) -> (String, Level, Filler) {
        (self.query_id.clone(), self.level, self.filler)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteMode {
    Overwrite,
    /// Keeps existing records; new records whose key is already present are
    /// skipped, or rejected with `DuplicateKey` when `strict`.
    Append { strict: bool },
}

/// Writes negative records and returns how many were written.
pub fn save_negatives(
    records: &[NegativeRecord],
    path: &Path,
    mode: WriteMode,
) -> Result<usize, CorpusError> {
    let (mut seen, file, strict) = match mode {
        WriteMode::Overwrite => (HashSet::new(), File::create(path)?, false),
        WriteMode::Append { strict } => {
            let existing = if path.exists() {
                load_negatives(path)?
            } else {
                Vec::new()
            };
            let seen: HashSet<_> = existing.iter().map(NegativeRecord::key).collect();
            let f = OpenOptions::new().create(true).append(true).open(path)?;
            (seen, f, strict)
        }
    };
    let mut w = BufWriter::new(file);
    let mut written = 0;
    for r in records {
        let key = r.key();
        if seen.contains(&key) {
            if strict {
                w.flush()?;
                return Err(CorpusError::DuplicateKey {
                    query_id: key.0,
                    level: key.1,
                    filler: key.2,
                });
            }
            continue;
        }
        let line = serde_json::to_string(r).expect("negative record serializes");
        writeln!(w, "{line}")?;
        seen.insert(key);
        written += 1;
    }
    w.flush()?;
    Ok(written)
}

pub fn load_negatives(path: &Path) -> Result<Vec<NegativeRecord>, CorpusError> {
    let file = open_existing(path)?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
            line_no: idx + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn open_existing(path: &Path) -> Result<File, CorpusError> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CorpusError::MissingFile(path.to_path_buf()),
        _ => CorpusError::Io(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    const GOOD: [&str; 3] = [
        r#"{"video_id":"a","duration_s":30.0,"span":[1.0,5.0],"query":"person opens the door","split":"train"}"#,
        r#"{"video_id":"b","duration_s":20.0,"span":[0.0,20.0],"query":"person sits","split":"test_trivial"}"#,
        r#"{"video_id":"c","duration_s":10.0,"span":[2.0,3.0],"query":"person eats","split":"novel_composition"}"#,
    ];

    #[test]
    fn loads_valid_file_in_order() {
        let f = write_lines(&GOOD);
        let recs = load_annotations(f.path()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].video_id, "a");
        assert_eq!(recs[2].split, Split::NovelComposition);
        assert_eq!(recs[1].query_id, "b#1");
    }

    #[test]
    fn inverted_span_is_out_of_range() {
        let f = write_lines(&[
            GOOD[0],
            r#"{"video_id":"x","duration_s":30.0,"span":[5.0,3.0],"query":"q","split":"train"}"#,
        ]);
        assert!(matches!(
            load_annotations(f.path()),
            Err(CorpusError::SpanOutOfRange { line_no: 2 })
        ));
    }

    #[test]
    fn span_past_duration_is_out_of_range() {
        let f = write_lines(&[
            r#"{"video_id":"x","duration_s":3.0,"span":[1.0,4.0],"query":"q","split":"train"}"#,
        ]);
        assert!(matches!(
            load_annotations(f.path()),
            Err(CorpusError::SpanOutOfRange { line_no: 1 })
        ));
    }

    #[test]
    fn malformed_line_fails_whole_file() {
        let f = write_lines(&[GOOD[0], "{not json", GOOD[1]]);
        assert!(matches!(
            load_annotations(f.path()),
            Err(CorpusError::MalformedRecord { line_no: 2, .. })
        ));
        let f = write_lines(&[
            r#"{"video_id":"x","duration_s":3.0,"span":[1.0,2.0],"query":"q","split":"dev"}"#,
        ]);
        assert!(matches!(
            load_annotations(f.path()),
            Err(CorpusError::MalformedRecord { .. })
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_annotations(Path::new("/nonexistent/annotations.jsonl")),
            Err(CorpusError::MissingFile(_))
        ));
    }

    fn neg(q: &str, level: Level, filler: Filler) -> NegativeRecord {
        NegativeRecord {
            query_id: q.into(),
            level,
            masked_positions: vec![1, 3],
            negative_text: "person takes the cup".into(),
            filler,
            model_id: None,
            fallback: false,
            created_at: 1_700_000_000,
        }
    }

    #[test]
    fn empty_write_gives_empty_valid_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("neg.jsonl");
        assert_eq!(save_negatives(&[], &p, WriteMode::Overwrite).unwrap(), 0);
        assert!(load_negatives(&p).unwrap().is_empty());
    }

    #[test]
    fn append_dedupes_and_strict_rejects() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("neg.jsonl");
        let a = neg("q1", Level::Hn1, Filler::Llm);
        save_negatives(&[a.clone()], &p, WriteMode::Overwrite).unwrap();
        let n = save_negatives(
            &[a.clone(), neg("q1", Level::Hn2, Filler::Llm)],
            &p,
            WriteMode::Append { strict: false },
        )
        .unwrap();
        assert_eq!(n, 1);
        assert_eq!(load_negatives(&p).unwrap().len(), 2);
        let err = save_negatives(&[a], &p, WriteMode::Append { strict: true }).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateKey { level: Level::Hn1, filler: Filler::Llm, .. }));
    }

    fn arb_record() -> impl Strategy<Value = NegativeRecord> {
        (
            "[a-z0-9#]{1,8}",
            0usize..3,
            proptest::collection::vec(0usize..20, 0..6),
            "[a-z ]{0,30}",
            any::<bool>(),
            proptest::option::of("[a-z0-9.-]{1,12}"),
            any::<bool>(),
            any::<u32>(),
        )
            .prop_map(|(q, l, pos, text, llm, model, fb, ts)| NegativeRecord {
                query_id: q,
                level: Level::ALL[l],
                masked_positions: pos,
                negative_text: text,
                filler: if llm { Filler::Llm } else { Filler::Lexicon },
                model_id: model,
                fallback: fb,
                created_at: ts as u64,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn negatives_round_trip(recs in proptest::collection::vec(arb_record(), 0..12)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("neg.jsonl");
            save_negatives(&recs, &p, WriteMode::Overwrite).unwrap();
            prop_assert_eq!(load_negatives(&p).unwrap(), recs);
        }
    }

    #[test]
    fn annotations_round_trip() {
        let f = write_lines(&GOOD);
        let recs = load_annotations(f.path()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ann.jsonl");
        save_annotations(&recs, &p).unwrap();
        assert_eq!(load_annotations(&p).unwrap(), recs);
    }
}
