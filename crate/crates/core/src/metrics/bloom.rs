//! Bloom's Revised Taxonomy classification.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::prompts::render_bloom_prompt;
use crate::gateway::Gateway;
use crate::text::word_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BloomLevel {
    Remember,
    Understand,
    Apply,
    Analyze,
    Evaluate,
    Create,
}

impl BloomLevel {
    pub const ALL: [BloomLevel; 6] = [
        BloomLevel::Remember,
        BloomLevel::Understand,
        BloomLevel::Apply,
        BloomLevel::Analyze,
        BloomLevel::Evaluate,
        BloomLevel::Create,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BloomLevel::Remember => "remember",
            BloomLevel::Understand => "understand",
            BloomLevel::Apply => "apply",
            BloomLevel::Analyze => "analyze",
            BloomLevel::Evaluate => "evaluate",
            BloomLevel::Create => "create",
        }
    }

    fn from_word(word: &str) -> Option<Self> {
        Some(match word {
            "remember" | "remembering" => BloomLevel::Remember,
            "understand" | "understanding" => BloomLevel::Understand,
            "apply" | "applying" | "application" => BloomLevel::Apply,
            "analyze" | "analyse" | "analyzing" | "analysing" | "analysis" => BloomLevel::Analyze,
            "evaluate" | "evaluating" | "evaluation" => BloomLevel::Evaluate,
            "create" | "creating" | "creation" => BloomLevel::Create,
            _ => return None,
        })
    }
}

impl fmt::Display for BloomLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BloomLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BloomLevel::from_word(&s.trim().to_lowercase())
            .ok_or_else(|| Error::Validation(format!("unknown Bloom level {s:?}")))
    }
}

/// Reads a forced-choice answer. `None` unless exactly one level is named.
pub fn parse_bloom_label(completion: &str) -> Option<BloomLevel> {
    let mut found: Option<BloomLevel> = None;
    for tok in word_tokens(completion) {
        if let Some(level) = BloomLevel::from_word(&tok) {
            match found {
                Some(prev) if prev != level => return None,
                _ => found = Some(level),
            }
        }
    }
    found
}

const CREATE: &[&str] = &["design", "propose", "develop a", "draft", "create", "formulate", "devise", "compose"];
const EVALUATE: &[&str] = &[
    "evaluate", "assess", "justify", "is it appropriate", "critique", "how effective", "which is better",
    "should the",
];
const ANALYZE: &[&str] = &[
    "compare", "contrast", "why", "difference between", "differ", "distinguish", "analyze",
    "relationship between", "what factors",
];
const APPLY: &[&str] = &[
    "if", "suppose", "say that", "in this case", "is this reportable", "must we", "would this",
    "how would", "how should", "what should", "do we need", "given that",
];
const UNDERSTAND: &[&str] = &[
    "explain", "describe", "summarize", "what does", "mean", "means", "interpret", "how does",
    "purpose of", "what is meant",
];

fn has_phrase(tokens: &[String], phrase: &str) -> bool {
    let p: Vec<&str> = phrase.split(' ').collect();
    tokens.windows(p.len()).any(|w| w.iter().zip(&p).all(|(a, b)| a == b))
}

/// Offline cue-word heuristic, checked from the highest level down; questions
/// with no cue default to Remember.
pub fn keyword_level(question: &str) -> BloomLevel {
    let tokens = word_tokens(question);
    let tiers: [(&[&str], BloomLevel); 5] = [
        (CREATE, BloomLevel::Create),
        (EVALUATE, BloomLevel::Evaluate),
        (ANALYZE, BloomLevel::Analyze),
        (APPLY, BloomLevel::Apply),
        (UNDERSTAND, BloomLevel::Understand),
    ];
    for (cues, level) in tiers {
        if cues.iter().any(|c| has_phrase(&tokens, c)) {
            return level;
        }
    }
    BloomLevel::Remember
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BloomLabel {
    pub level: BloomLevel,
    /// Set when the model's answer could not be read; such labels are left
    /// out of headline histograms.
    pub uncertain: bool,
}

/// Classifies with a single forced-choice prompt at temperature 0, re-asking
/// once when the answer is unreadable.
pub fn classify_bloom(gateway: &Gateway, question: &str) -> Result<BloomLabel> {
    let mut req = render_bloom_prompt(question)?;
    for salt in 0..2 {
        req.retry_salt = salt;
        let out = gateway.chat(&req)?;
        if let Some(level) = parse_bloom_label(&out[0]) {
            return Ok(BloomLabel {
                level,
                uncertain: false,
            });
        }
    }
    Ok(BloomLabel {
        level: BloomLevel::Understand,
        uncertain: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BloomHistogram {
    pub counts: BTreeMap<BloomLevel, usize>,
    pub classified: usize,
    pub uncertain: usize,
}

impl BloomHistogram {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a BloomLabel>) -> Self {
        let mut counts: BTreeMap<BloomLevel, usize> = BloomLevel::ALL.iter().map(|l| (*l, 0)).collect();
        let (mut classified, mut uncertain) = (0, 0);
        for l in labels {
            if l.uncertain {
                uncertain += 1;
            } else {
                *counts.get_mut(&l.level).expect("all levels present") += 1;
                classified += 1;
            }
        }
        BloomHistogram {
            counts,
            classified,
            uncertain,
        }
    }

    pub fn share(&self, level: BloomLevel) -> f64 {
        if self.classified == 0 {
            0.0
        } else {
            self.counts[&level] as f64 / self.classified as f64
        }
    }
}
