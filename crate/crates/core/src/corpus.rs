//! Document chunks, the expert QA pool, and train/test splitting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::text::{content_id, normalize_whitespace};

/// Default upper bound for [`chunk_document`].
pub const DEFAULT_MAX_CHUNK_CHARS: usize = 4000;

/// A normalized topic label: lowercased, trimmed, inner whitespace collapsed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Topic(String);

impl Topic {
    pub fn new(label: &str) -> Result<Self> {
        let label = normalize_whitespace(&label.to_lowercase());
        if label.is_empty() {
            return Err(Error::Validation("topic label is empty".into()));
        }
        Ok(Topic(label))
    }

    pub fn label(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Topic {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        Topic::new(&value)
    }
}

impl From<Topic> for String {
    fn from(t: Topic) -> String {
        t.0
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Deduplicates labels, keeping the first occurrence.
pub fn dedup_topics(topics: impl IntoIterator<Item = Topic>) -> Vec<Topic> {
    let mut seen = BTreeSet::new();
    topics
        .into_iter()
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

/// Broad question type used to group few-shot exemplars.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StyleCategory(String);

impl StyleCategory {
    pub const POLICY_APPLICATION: &'static str = "policy_application";
    pub const SCENARIO_BASED: &'static str = "scenario_based";
    pub const TERMINOLOGY_CLARIFICATION: &'static str = "terminology_clarification";

    pub fn new(name: impl Into<String>) -> Self {
        StyleCategory(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StyleCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The configured style set. Order is the iteration order used by the generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StyleSet(Vec<StyleCategory>);

impl Default for StyleSet {
    fn default() -> Self {
        StyleSet(vec![
            StyleCategory::new(StyleCategory::POLICY_APPLICATION),
            StyleCategory::new(StyleCategory::SCENARIO_BASED),
            StyleCategory::new(StyleCategory::TERMINOLOGY_CLARIFICATION),
        ])
    }
}

impl StyleSet {
    pub fn new(names: impl IntoIterator<Item = impl Into<String>>) -> Result<Self> {
        let mut styles: Vec<StyleCategory> = Vec::new();
        for name in names {
            let name = name.into();
            let name = name.trim();
            if name.is_empty() {
                return Err(Error::Config("style name is empty".into()));
            }
            if styles.iter().any(|s| s.name() == name) {
                return Err(Error::Config(format!("style {name:?} listed twice")));
            }
            styles.push(StyleCategory::new(name));
        }
        if styles.is_empty() {
            return Err(Error::Config("style set is empty".into()));
        }
        Ok(StyleSet(styles))
    }

    pub fn iter(&self) -> impl Iterator<Item = &StyleCategory> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn resolve(&self, name: &str) -> Result<StyleCategory> {
        self.0
            .iter()
            .find(|s| s.name() == name)
            .cloned()
            .ok_or_else(|| {
                let allowed: Vec<&str> = self.0.iter().map(|s| s.name()).collect();
                Error::Validation(format!(
                    "unknown style {name:?}; allowed styles: {}",
                    allowed.join(", ")
                ))
            })
    }
}

/// A unit of source text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub id: String,
    pub doc_id: String,
    pub seq: u64,
    pub text: String,
    #[serde(default)]
    pub topics: Vec<Topic>,
}

impl DocumentChunk {
    /// Builds a chunk with normalized text and a content-addressed id.
    pub fn new(doc_id: &str, seq: u64, text: &str) -> Result<Self> {
        let text = normalize_whitespace(text);
        if text.is_empty() {
            return Err(Error::Validation(format!(
                "chunk ({doc_id}, {seq}) has empty text"
            )));
        }
        Ok(DocumentChunk {
            id: chunk_id(doc_id, seq, &text),
            doc_id: doc_id.to_string(),
            seq,
            text,
            topics: Vec::new(),
        })
    }

    /// `doc_id:seq`, accepted wherever a chunk reference is expected.
    pub fn locator(&self) -> String {
        format!("{}:{}", self.doc_id, self.seq)
    }
}

pub fn chunk_id(doc_id: &str, seq: u64, normalized_text: &str) -> String {
    format!(
        "c-{}",
        content_id(&[doc_id, &seq.to_string(), normalized_text])
    )
}

#[derive(Deserialize)]
struct ChunkRecord {
    doc_id: String,
    seq: u64,
    text: String,
    #[serde(default)]
    topics: Vec<Topic>,
}

/// Loads `{doc_id, seq, text}` records and returns them in `(doc_id, seq)` order.
pub fn load_corpus(path: &Path) -> Result<Vec<DocumentChunk>> {
    let records: Vec<ChunkRecord> = jsonl::read(path)?;
    let mut seen = BTreeMap::new();
    let mut chunks = Vec::with_capacity(records.len());
    for (i, r) in records.into_iter().enumerate() {
        if let Some(prev) = seen.insert((r.doc_id.clone(), r.seq), i) {
            return Err(Error::Integrity(format!(
                "{}: duplicate (doc_id, seq) = ({}, {}) on records {} and {}",
                path.display(),
                r.doc_id,
                r.seq,
                prev + 1,
                i + 1
            )));
        }
        let mut chunk = DocumentChunk::new(&r.doc_id, r.seq, &r.text).map_err(|e| {
            Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            }
        })?;
        chunk.topics = crate::corpus::dedup_topics(r.topics);
        chunks.push(chunk);
    }
    sort_chunks(&mut chunks);
    Ok(chunks)
}

pub fn sort_chunks(chunks: &mut [DocumentChunk]) {
    chunks.sort_by(|a, b| (&a.doc_id, a.seq).cmp(&(&b.doc_id, b.seq)));
}

pub fn save_corpus(path: &Path, chunks: &[DocumentChunk]) -> Result<()> {
    jsonl::write(path, chunks)
}

/// Lookup from chunk id or `doc_id:seq` locator to chunk id.
#[derive(Debug, Clone, Default)]
pub struct ChunkIndex {
    by_ref: HashMap<String, usize>,
}

impl ChunkIndex {
    pub fn new(chunks: &[DocumentChunk]) -> Self {
        let mut by_ref = HashMap::new();
        for (i, c) in chunks.iter().enumerate() {
            by_ref.insert(c.id.clone(), i);
            by_ref.insert(c.locator(), i);
        }
        ChunkIndex { by_ref }
    }

    pub fn position(&self, reference: &str) -> Option<usize> {
        self.by_ref.get(reference).copied()
    }
}

/// An expert-written QA pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertQA {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub style: StyleCategory,
    pub source_chunk_ids: Vec<String>,
}

#[derive(Deserialize)]
struct ExpertRecord {
    #[serde(default)]
    id: Option<String>,
    question: String,
    #[serde(default)]
    answer: String,
    style: String,
    #[serde(default)]
    source_chunk_ids: Vec<String>,
}

/// Loads and validates the expert pool.
///
/// With `chunks` given, every source reference must resolve; references may be
/// chunk ids or `doc_id:seq` locators and are rewritten to chunk ids.
pub fn load_expert_pool(
    path: &Path,
    styles: &StyleSet,
    chunks: Option<&[DocumentChunk]>,
) -> Result<Vec<ExpertQA>> {
    let records: Vec<ExpertRecord> = jsonl::read(path)?;
    let index = chunks.map(ChunkIndex::new);
    let mut ids = BTreeSet::new();
    let mut pool = Vec::with_capacity(records.len());
    for (i, r) in records.into_iter().enumerate() {
        let line = i + 1;
        let at = |message: String| Error::Validation(format!("{}:{line}: {message}", path.display()));
        let question = normalize_whitespace(&r.question);
        if question.is_empty() {
            return Err(at("question is empty".into()));
        }
        let style = styles.resolve(&r.style).map_err(|e| at(e.to_string()))?;
        let id = r
            .id
            .unwrap_or_else(|| format!("h-{}", content_id(&[&question])));
        if !ids.insert(id.clone()) {
            return Err(Error::Integrity(format!(
                "{}:{line}: duplicate expert id {id}",
                path.display()
            )));
        }
        let mut sources = Vec::with_capacity(r.source_chunk_ids.len());
        for src in r.source_chunk_ids {
            match (&index, chunks) {
                (Some(index), Some(chunks)) => {
                    let pos = index
                        .position(&src)
                        .ok_or_else(|| at(format!("source chunk {src:?} does not resolve")))?;
                    sources.push(chunks[pos].id.clone());
                }
                _ => sources.push(src),
            }
        }
        pool.push(ExpertQA {
            id,
            question,
            answer: normalize_whitespace(&r.answer),
            style,
            source_chunk_ids: sources,
        });
    }
    Ok(pool)
}

pub fn save_expert_pool(path: &Path, pool: &[ExpertQA]) -> Result<()> {
    jsonl::write(path, pool)
}

/// Seeded partition of the pool. Each side keeps the pool's original order.
pub fn split_pool(
    pool: &[ExpertQA],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<ExpertQA>, Vec<ExpertQA>)> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::Contract(format!(
            "test_fraction {test_fraction} outside [0, 1]"
        )));
    }
    let n_test = (test_fraction * pool.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_idx: BTreeSet<usize> = order[..n_test].iter().copied().collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, qa) in pool.iter().enumerate() {
        if test_idx.contains(&i) {
            test.push(qa.clone());
        } else {
            train.push(qa.clone());
        }
    }
    Ok((train, test))
}

/// Splits raw document text at blank lines and packs paragraphs into chunks of at
/// most `max_chars` characters. Paragraphs longer than the limit are broken at
/// word boundaries; a single word longer than the limit becomes its own chunk.
pub fn chunk_document(text: &str, max_chars: usize) -> Vec<String> {
    let max_chars = max_chars.max(1);
    let mut pieces = Vec::new();
    let mut para = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !para.is_empty() {
                pieces.push(normalize_whitespace(&para));
                para.clear();
            }
        } else {
            para.push(' ');
            para.push_str(line);
        }
    }
    if !para.trim().is_empty() {
        pieces.push(normalize_whitespace(&para));
    }

    let mut out = Vec::new();
    let mut current = String::new();
    let push_word = |current: &mut String, out: &mut Vec<String>, word: &str, sep: &str| {
        let len = current.chars().count();
        let extra = sep.chars().count() + word.chars().count();
        if !current.is_empty() && len + extra > max_chars {
            out.push(std::mem::take(current));
            current.push_str(word);
        } else {
            if !current.is_empty() {
                current.push_str(sep);
            }
            current.push_str(word);
        }
    };
    for piece in pieces {
        let fits_whole = current.chars().count() + 2 + piece.chars().count() <= max_chars;
        if !current.is_empty() && fits_whole {
            current.push_str("\n\n");
            current.push_str(&piece);
            continue;
        }
        if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
        for word in piece.split(' ') {
            push_word(&mut current, &mut out, word, " ");
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    fn qa(id: &str, style: &str) -> ExpertQA {
        ExpertQA {
            id: id.into(),
            question: format!("question {id}"),
            answer: String::new(),
            style: StyleCategory::new(style),
            source_chunk_ids: vec![],
        }
    }

    #[test]
    fn single_record_has_deterministic_id() {
        let f = write_tmp(&[r#"{"doc_id":"d1","seq":0,"text":"abc"}"#]);
        let chunks = load_corpus(f.path()).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].id, chunk_id("d1", 0, "abc"));
        let again = load_corpus(f.path()).unwrap();
        assert_eq!(chunks, again);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let f = write_tmp(&[]);
        assert!(load_corpus(f.path()).unwrap().is_empty());
    }

    #[test]
    fn duplicate_doc_seq_is_integrity_error() {
        let f = write_tmp(&[
            r#"{"doc_id":"d1","seq":0,"text":"abc"}"#,
            r#"{"doc_id":"d1","seq":0,"text":"other"}"#,
        ]);
        assert!(matches!(load_corpus(f.path()), Err(Error::Integrity(_))));
    }

    #[test]
    fn malformed_line_cites_line_number() {
        let f = write_tmp(&[r#"{"doc_id":"d1","seq":0,"text":"abc"}"#, "{not json"]);
        match load_corpus(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn chunks_sorted_and_normalized() {
        let f = write_tmp(&[
            r#"{"doc_id":"d2","seq":0,"text":"z"}"#,
            r#"{"doc_id":"d1","seq":3,"text":"  b \n\t c "}"#,
            r#"{"doc_id":"d1","seq":1,"text":"a"}"#,
        ]);
        let chunks = load_corpus(f.path()).unwrap();
        let keys: Vec<_> = chunks.iter().map(|c| (c.doc_id.as_str(), c.seq)).collect();
        assert_eq!(keys, vec![("d1", 1), ("d1", 3), ("d2", 0)]);
        assert_eq!(chunks[1].text, "b c");
    }

    #[test]
    fn load_save_round_trip() {
        let f = write_tmp(&[
            r#"{"doc_id":"d1","seq":0,"text":"alpha beta"}"#,
            r#"{"doc_id":"d1","seq":1,"text":"gamma","topics":["Rail Safety"]}"#,
        ]);
        let chunks = load_corpus(f.path()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_corpus(out.path(), &chunks).unwrap();
        assert_eq!(load_corpus(out.path()).unwrap(), chunks);
        assert_eq!(chunks[1].topics[0].label(), "rail safety");
    }

    #[test]
    fn expert_pool_style_validation() {
        let styles = StyleSet::default();
        let ok = write_tmp(&[
            r#"{"id":"h1","question":"q?","answer":"a","style":"policy_application","source_chunk_ids":[]}"#,
        ]);
        assert_eq!(load_expert_pool(ok.path(), &styles, None).unwrap().len(), 1);

        let bad = write_tmp(&[
            r#"{"id":"h1","question":"q?","answer":"a","style":"haiku","source_chunk_ids":[]}"#,
        ]);
        let err = load_expert_pool(bad.path(), &styles, None).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Validation(_)));
        assert!(msg.contains("scenario_based") && msg.contains("terminology_clarification"));
    }

    #[test]
    fn expert_sources_resolve_by_locator() {
        let chunks = vec![DocumentChunk::new("d1", 0, "text").unwrap()];
        let f = write_tmp(&[
            r#"{"id":"h1","question":"q?","answer":"a","style":"scenario_based","source_chunk_ids":["d1:0"]}"#,
        ]);
        let pool = load_expert_pool(f.path(), &StyleSet::default(), Some(&chunks)).unwrap();
        assert_eq!(pool[0].source_chunk_ids, vec![chunks[0].id.clone()]);

        let dangling = write_tmp(&[
            r#"{"id":"h1","question":"q?","answer":"a","style":"scenario_based","source_chunk_ids":["d9:0"]}"#,
        ]);
        assert!(load_expert_pool(dangling.path(), &StyleSet::default(), Some(&chunks)).is_err());
    }

    #[test]
    fn pool_of_147() {
        let styles = ["policy_application", "scenario_based", "terminology_clarification"];
        let lines: Vec<String> = (0..147)
            .map(|i| {
                format!(
                    r#"{{"id":"h{i}","question":"Expert question {i}?","answer":"a","style":"{}","source_chunk_ids":[]}}"#,
                    styles[i % 3]
                )
            })
            .collect();
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let f = write_tmp(&refs);
        assert_eq!(
            load_expert_pool(f.path(), &StyleSet::default(), None).unwrap().len(),
            147
        );
    }

    #[test]
    fn split_extremes() {
        let pool: Vec<_> = (0..10).map(|i| qa(&format!("h{i}"), "scenario_based")).collect();
        let (train, test) = split_pool(&pool, 1.0, 7).unwrap();
        assert!(train.is_empty());
        assert_eq!(test, pool);
        let (train, test) = split_pool(&pool, 0.0, 7).unwrap();
        assert!(test.is_empty());
        assert_eq!(train, pool);
        assert!(split_pool(&pool, 1.5, 7).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let pool: Vec<_> = (0..10).map(|i| qa(&format!("h{i}"), "scenario_based")).collect();
        let a = split_pool(&pool, 0.3, 42).unwrap();
        let b = split_pool(&pool, 0.3, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.len(), 3);
    }

    #[test]
    fn chunker_packs_paragraphs() {
        let text = "para one line\ncontinues\n\npara two\n\n\npara three is here";
        let chunks = chunk_document(text, 30);
        assert_eq!(chunks, vec!["para one line continues", "para two\n\npara three is here"]);
        for c in chunk_document(&"word ".repeat(100), 23) {
            assert!(c.chars().count() <= 23);
        }
        assert!(chunk_document("  \n\n ", 10).is_empty());
    }

    #[test]
    fn style_set_rejects_duplicates() {
        assert!(StyleSet::new(["a", "a"]).is_err());
        assert!(StyleSet::new(Vec::<String>::new()).is_err());
        assert_eq!(StyleSet::new(["a", "b"]).unwrap().len(), 2);
    }

    #[test]
    fn topic_normalization() {
        assert_eq!(Topic::new("  Rail   SAFETY ").unwrap().label(), "rail safety");
        assert!(Topic::new("   ").is_err());
    }
}
