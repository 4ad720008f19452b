//! Near-duplicate removal by word-bigram overlap.
//!
//! Overlap defaults to containment, `|A ∩ B| / min(|A|, |B|)`, with Jaccard
//! available for ablations. Questions with fewer than two tokens have no
//! bigrams; two such questions overlap fully iff their normalized token
//! strings are equal.
//!
//! The greedy scans use an inverted index from bigram to kept item, so only
//! candidates sharing at least one bigram are compared.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::word_tokens;

pub const DEFAULT_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapMode {
    #[default]
    Containment,
    Jaccard,
}

impl fmt::Display for OverlapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OverlapMode::Containment => "containment",
            OverlapMode::Jaccard => "jaccard",
        })
    }
}

impl FromStr for OverlapMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "containment" => Ok(OverlapMode::Containment),
            "jaccard" => Ok(OverlapMode::Jaccard),
            other => Err(Error::Config(format!(
                "unknown overlap mode {other:?}; expected containment or jaccard"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DedupConfig {
    pub threshold: f64,
    pub mode: OverlapMode,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            threshold: DEFAULT_THRESHOLD,
            mode: OverlapMode::Containment,
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Contract(format!(
                "dedup threshold {} outside (0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

type Bigram = (String, String);

/// The bigram set of one text over normalized tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BigramSet {
    bigrams: HashSet<Bigram>,
    normalized: String,
}

impl BigramSet {
    pub fn new(text: &str) -> Self {
        let tokens = word_tokens(text);
        let bigrams = tokens
            .windows(2)
            .map(|w| (w[0].clone(), w[1].clone()))
            .collect();
        BigramSet {
            bigrams,
            normalized: tokens.join(" "),
        }
    }

    pub fn len(&self) -> usize {
        self.bigrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bigrams.is_empty()
    }

    pub fn normalized(&self) -> &str {
        &self.normalized
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        self.bigrams.contains(&(a.to_string(), b.to_string()))
    }

    pub fn overlap(&self, other: &BigramSet, mode: OverlapMode) -> f64 {
        if self.is_empty() || other.is_empty() {
            return if self.normalized == other.normalized { 1.0 } else { 0.0 };
        }
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        let shared = small.bigrams.iter().filter(|b| large.bigrams.contains(*b)).count();
        let denom = match mode {
            OverlapMode::Containment => small.len(),
            OverlapMode::Jaccard => self.len() + other.len() - shared,
        };
        shared as f64 / denom as f64
    }
}

/// Containment overlap of two texts in `[0, 1]`.
pub fn bigram_overlap(a: &str, b: &str) -> f64 {
    bigram_overlap_with(a, b, OverlapMode::Containment)
}

pub fn bigram_overlap_with(a: &str, b: &str, mode: OverlapMode) -> f64 {
    BigramSet::new(a).overlap(&BigramSet::new(b), mode)
}

/// Inverted index over a growing set of bigram sets.
#[derive(Debug, Default)]
pub struct BigramIndex {
    sets: Vec<BigramSet>,
    postings: HashMap<Bigram, Vec<usize>>,
    short: HashMap<String, Vec<usize>>,
}

impl BigramIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn insert(&mut self, set: BigramSet) -> usize {
        let id = self.sets.len();
        if set.is_empty() {
            self.short.entry(set.normalized.clone()).or_default().push(id);
        } else {
            for b in &set.bigrams {
                self.postings.entry(b.clone()).or_default().push(id);
            }
        }
        self.sets.push(set);
        id
    }

    /// First indexed entry (lowest id) whose overlap with `set` reaches
    /// `threshold`, with that overlap.
    pub fn first_match(&self, set: &BigramSet, threshold: f64, mode: OverlapMode) -> Option<(usize, f64)> {
        if set.is_empty() {
            return self.short.get(&set.normalized).map(|ids| (ids[0], 1.0));
        }
        let mut candidates: Vec<usize> = set
            .bigrams
            .iter()
            .filter_map(|b| self.postings.get(b))
            .flatten()
            .copied()
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        candidates.into_iter().find_map(|id| {
            let o = self.sets[id].overlap(set, mode);
            (o >= threshold).then_some((id, o))
        })
    }
}

/// Why an item was dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dropped {
    pub index: usize,
    /// Input index (within-set) or reference index (against-set) it collided with.
    pub matched: usize,
    pub overlap: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DedupOutcome {
    pub kept: Vec<usize>,
    pub dropped: Vec<Dropped>,
}

/// Greedy scan in input order: an item is kept iff its overlap with every
/// previously kept item is below `threshold`. Returns kept indices in order.
pub fn dedup_within<S: AsRef<str>>(questions: &[S], config: &DedupConfig) -> Result<DedupOutcome> {
    config.validate()?;
    let mut index = BigramIndex::new();
    let mut kept_at: Vec<usize> = Vec::new();
    let mut out = DedupOutcome::default();
    for (i, q) in questions.iter().enumerate() {
        let set = BigramSet::new(q.as_ref());
        match index.first_match(&set, config.threshold, config.mode) {
            Some((id, overlap)) => out.dropped.push(Dropped {
                index: i,
                matched: kept_at[id],
                overlap,
            }),
            None => {
                index.insert(set);
                kept_at.push(i);
                out.kept.push(i);
            }
        }
    }
    Ok(out)
}

/// Drops every item whose overlap with any reference text reaches `threshold`.
pub fn dedup_against<S: AsRef<str>, R: AsRef<str>>(
    questions: &[S],
    reference: &[R],
    config: &DedupConfig,
) -> Result<DedupOutcome> {
    config.validate()?;
    let mut index = BigramIndex::new();
    for r in reference {
        index.insert(BigramSet::new(r.as_ref()));
    }
    let mut out = DedupOutcome::default();
    for (i, q) in questions.iter().enumerate() {
        match index.first_match(&BigramSet::new(q.as_ref()), config.threshold, config.mode) {
            Some((matched, overlap)) => out.dropped.push(Dropped {
                index: i,
                matched,
                overlap,
            }),
            None => out.kept.push(i),
        }
    }
    Ok(out)
}

/// Selects `items[i]` for each kept index.
pub fn select<T: Clone>(items: &[T], outcome: &DedupOutcome) -> Vec<T> {
    outcome.kept.iter().map(|&i| items[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// All adjacent token pairs, by hand.
    fn bigrams_by_hand(tokens: &[&str]) -> HashSet<(String, String)> {
        (1..tokens.len())
            .map(|i| (tokens[i - 1].to_string(), tokens[i].to_string()))
            .collect()
    }

    #[test]
    fn identity_and_disjoint() {
        assert_eq!(bigram_overlap("what is a subpoena", "what is a subpoena"), 1.0);
        assert_eq!(bigram_overlap("alpha beta gamma", "delta epsilon zeta"), 0.0);
    }

    #[test]
    fn one_third_by_enumeration() {
        let a = bigrams_by_hand(&["a", "b", "c", "d"]);
        let b = bigrams_by_hand(&["a", "b", "x", "y"]);
        let expected = a.intersection(&b).count() as f64 / a.len().min(b.len()) as f64;
        assert_eq!(expected, 1.0 / 3.0);
        assert_eq!(bigram_overlap("a b c d", "a b x y"), expected);
    }

    #[test]
    fn jaccard_mode() {
        // shared {(a,b)}, union 5
        assert_eq!(bigram_overlap_with("a b c d", "a b x y", OverlapMode::Jaccard), 0.2);
    }

    #[test]
    fn short_texts() {
        assert_eq!(bigram_overlap("Subpoena?", "subpoena"), 1.0);
        assert_eq!(bigram_overlap("subpoena", "warrant"), 0.0);
        assert_eq!(bigram_overlap("subpoena", "what is a subpoena"), 0.0);
        assert_eq!(bigram_overlap("", ""), 1.0);
    }

    #[test]
    fn punctuation_and_case_ignored() {
        assert_eq!(bigram_overlap("What is a Subpoena?", "what is a subpoena"), 1.0);
    }

    #[test]
    fn within_keeps_first() {
        let out = dedup_within(&["same question here", "same question here"], &DedupConfig::default()).unwrap();
        assert_eq!(out.kept, vec![0]);
        assert_eq!(out.dropped[0].matched, 0);
        let disjoint = ["alpha beta", "gamma delta", "epsilon zeta"];
        assert_eq!(dedup_within(&disjoint, &DedupConfig::default()).unwrap().kept, vec![0, 1, 2]);
    }

    #[test]
    fn against_reference() {
        let cfg = DedupConfig::default();
        let qs = ["What is a subpoena?", "How are accidents reported to the agency?"];
        let out = dedup_against(&qs, &["what is a subpoena"], &cfg).unwrap();
        assert_eq!(out.kept, vec![1]);
        let none: [&str; 0] = [];
        assert_eq!(dedup_against(&qs, &none, &cfg).unwrap().kept, vec![0, 1]);
    }

    #[test]
    fn half_shared_paraphrase_dropped() {
        // reference bigrams: (when,must) (must,a) (a,railroad) (railroad,report)
        // paraphrase bigrams: (when,must) (must,a) (a,carrier) (carrier,file)
        let reference = "when must a railroad report";
        let paraphrase = "when must a carrier file";
        let r = bigrams_by_hand(&["when", "must", "a", "railroad", "report"]);
        let p = bigrams_by_hand(&["when", "must", "a", "carrier", "file"]);
        let oracle = r.intersection(&p).count() as f64 / r.len().min(p.len()) as f64;
        assert_eq!(oracle, 0.5);
        let out = dedup_against(&[paraphrase], &[reference], &DedupConfig::default()).unwrap();
        assert!(out.kept.is_empty());
        assert_eq!(out.dropped[0].overlap, 0.5);
    }

    #[test]
    fn threshold_contract() {
        let cfg = DedupConfig {
            threshold: 0.0,
            ..Default::default()
        };
        assert!(dedup_within(&["a"], &cfg).is_err());
        assert!("cosine".parse::<OverlapMode>().is_err());
    }
}
