//! Deterministic offline provider.
//!
//! Every output is a pure function of the request content and the seed, so
//! repeated runs are byte-identical. Generated questions are either the
//! "canonical" question for their (passage, anchor) pair, shared by every combo
//! and sample and therefore a planted duplicate, or a unique question built from
//! pseudo-words. `duplicate_rate` sets the probability of the former.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prompts::{
    extract_passage, extract_selected_topic, extract_tagged, ANSWER_MARKER, BLOOM_MARKER,
    FEWSHOT_INSTRUCTION, GENERATION_MARKER, TEMPLATE_MARKER, TOPIC_INSTRUCTION,
};
use super::{ChatRequest, ChatResponse, Provider, RewardRequest};
use crate::error::ProviderError;
use crate::metrics::bloom::keyword_level;
use crate::text::{hash_u64, whitespace_len, word_tokens};

const STOPWORDS: &[&str] = &[
    "about", "above", "after", "again", "against", "allowed", "another", "because", "before",
    "being", "below", "between", "cannot", "could", "during", "either", "except", "further",
    "however", "itself", "should", "shall", "through", "under", "until", "whether", "where",
    "which", "while", "within", "without", "would",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockSettings {
    /// Probability that a generated question is the shared canonical one.
    pub duplicate_rate: f64,
    pub embed_dim: usize,
    pub max_topics: usize,
    /// Minimum length (chars) of a word to count as a mock topic.
    pub min_topic_len: usize,
}

impl Default for MockSettings {
    fn default() -> Self {
        MockSettings {
            duplicate_rate: 0.5,
            embed_dim: 64,
            max_topics: 5,
            min_topic_len: 6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MockProvider {
    seed: u64,
    settings: MockSettings,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        MockProvider {
            seed,
            settings: MockSettings::default(),
        }
    }

    pub fn with_settings(seed: u64, settings: MockSettings) -> Self {
        MockProvider { seed, settings }
    }

    pub fn settings(&self) -> &MockSettings {
        &self.settings
    }

    fn rng(&self, parts: &[&str]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(crate::text::derive_seed(self.seed, parts))
    }

    fn unit(&self, parts: &[&str]) -> f64 {
        self.rng(parts).gen::<f64>()
    }

    /// Distinct passage words of at least `min_topic_len` chars, first-occurrence order.
    pub fn passage_topics(&self, passage: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for tok in word_tokens(passage) {
            if tok.chars().count() < self.settings.min_topic_len
                || tok.chars().all(|c| c.is_numeric())
                || STOPWORDS.contains(&tok.as_str())
                || out.contains(&tok)
            {
                continue;
            }
            out.push(tok);
            if out.len() == self.settings.max_topics {
                break;
            }
        }
        out
    }

    fn topic_completion(&self, prompt: &str) -> String {
        let passage = extract_passage(prompt).unwrap_or_default();
        let topics = self.passage_topics(passage);
        serde_json::json!({ "topics": topics }).to_string()
    }

    fn question(&self, request_key: &str, sample: usize, prompt: &str) -> String {
        let passage = extract_passage(prompt).unwrap_or_default();
        let anchor = match extract_selected_topic(prompt) {
            Some(t) => t.to_string(),
            None => {
                let words = self.passage_topics(passage);
                if words.is_empty() {
                    "the passage".to_string()
                } else {
                    let mut rng = self.rng(&[request_key, &sample.to_string(), "anchor"]);
                    words[rng.gen_range(0..words.len())].clone()
                }
            }
        };
        let duplicate =
            self.unit(&[request_key, &sample.to_string(), "dup"]) < self.settings.duplicate_rate;
        let mut rng = if duplicate {
            self.rng(&["canonical", passage, &anchor])
        } else {
            self.rng(&[request_key, &sample.to_string(), "unique"])
        };
        let mut words: Vec<String> = (0..7).map(|_| pseudo_word(&mut rng)).collect();
        words.insert(3, anchor);
        let mut q = words.join(" ");
        capitalize(&mut q);
        q.push('?');
        q
    }

    fn response(&self, request_key: &str, sample: usize, prompt: &str) -> String {
        let mut rng = self.rng(&[request_key, &sample.to_string(), "response"]);
        let pool: Vec<String> = word_tokens(prompt);
        let len = rng.gen_range(10..80);
        let words: Vec<String> = (0..len)
            .map(|_| {
                if !pool.is_empty() && rng.gen_bool(0.6) {
                    pool[rng.gen_range(0..pool.len())].clone()
                } else {
                    pseudo_word(&mut rng)
                }
            })
            .collect();
        let mut s = words.join(" ");
        capitalize(&mut s);
        s.push('.');
        s
    }

    fn complete(&self, request: &ChatRequest, request_key: &str, sample: usize) -> String {
        let prompt = request.last_user();
        if prompt.contains(TOPIC_INSTRUCTION) {
            self.topic_completion(prompt)
        } else if prompt.contains(BLOOM_MARKER) {
            let q = extract_tagged(prompt, "question").unwrap_or_default();
            let mut label = keyword_level(q).to_string();
            capitalize(&mut label);
            label
        } else if let Some(target) = extract_tagged(prompt, "target_question") {
            let mut t = target.to_string();
            if let Some(first) = t.get(..1) {
                let lower = first.to_lowercase();
                t.replace_range(..1, &lower);
            }
            format!("Could you clarify, {t}")
        } else if prompt.contains(ANSWER_MARKER) {
            let passage = extract_passage(prompt).unwrap_or_default();
            let words: Vec<&str> = passage.split_whitespace().take(25).collect();
            words.join(" ")
        } else if prompt.contains(GENERATION_MARKER)
            || prompt.contains(FEWSHOT_INSTRUCTION)
            || prompt.contains(TEMPLATE_MARKER)
        {
            self.question(request_key, sample, prompt)
        } else {
            self.response(request_key, sample, prompt)
        }
    }
}

fn capitalize(s: &mut String) {
    if let Some(first) = s.get(..1) {
        let upper = first.to_uppercase();
        s.replace_range(..1, &upper);
    }
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    const CONS: &[u8] = b"bcdfghjklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let syllables = rng.gen_range(2..4);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(CONS[rng.gen_range(0..CONS.len())] as char);
        w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
    }
    if rng.gen_bool(0.5) {
        w.push(CONS[rng.gen_range(0..CONS.len())] as char);
    }
    w
}

impl Provider for MockProvider {
    fn cache_namespace(&self) -> String {
        format!(
            "mock:seed={}:dup={}:dim={}:topics={}/{}",
            self.seed,
            self.settings.duplicate_rate,
            self.settings.embed_dim,
            self.settings.max_topics,
            self.settings.min_topic_len
        )
    }

    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let body = serde_json::to_string(request).map_err(|e| ProviderError::Decode(e.to_string()))?;
        let key = hash_u64(&[&body]).to_string();
        let completions = (0..request.n_samples as usize)
            .map(|j| self.complete(request, &key, j))
            .collect();
        Ok(ChatResponse {
            completions,
            usage: None,
        })
    }

    fn score(&self, request: &RewardRequest) -> Result<f64, ProviderError> {
        let body = serde_json::to_string(request).map_err(|e| ProviderError::Decode(e.to_string()))?;
        let len = whitespace_len(request.response()) as f64;
        let noise = self.unit(&[&body, "reward"]) - 0.5;
        Ok(-12.0 + 8.0 * (1.0 - (-len / 40.0).exp()) + 2.0 * noise)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let dim = self.settings.embed_dim.max(1);
        Ok(texts
            .iter()
            .map(|t| {
                let mut v = vec![0.0; dim];
                let tokens = word_tokens(t);
                if tokens.is_empty() {
                    v[(hash_u64(&["", "empty"]) % dim as u64) as usize] = 1.0;
                }
                for tok in tokens {
                    let h = hash_u64(&[&tok, "embed"]);
                    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                    v[(h % dim as u64) as usize] += sign;
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                } else {
                    v[0] = 1.0;
                }
                v
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DocumentChunk, Topic};
    use crate::gateway::prompts::{render_generation_prompt, render_topic_prompt};
    use crate::gateway::{parse_topics, Gateway};

    #[test]
    fn same_request_same_output() {
        let gw = Gateway::new(MockProvider::new(3));
        let req = ChatRequest::user("Tell me something").with_samples(3);
        assert_eq!(gw.chat(&req).unwrap(), gw.chat(&req).unwrap());
        let other_seed = Gateway::new(MockProvider::new(4));
        assert_ne!(gw.chat(&req).unwrap(), other_seed.chat(&req).unwrap());
    }

    #[test]
    fn exact_sample_count() {
        let gw = Gateway::new(MockProvider::new(0));
        assert_eq!(gw.chat(&ChatRequest::user("x").with_samples(5)).unwrap().len(), 5);
    }

    #[test]
    fn topic_extraction_round_trip() {
        let gw = Gateway::new(MockProvider::new(0));
        let chunk = DocumentChunk::new("d", 0, "The reporting rules and penalties apply.").unwrap();
        let out = gw.chat(&render_topic_prompt(&chunk).unwrap()).unwrap();
        let topics = parse_topics(&out[0]).unwrap();
        let labels: Vec<_> = topics.iter().map(Topic::label).collect();
        assert_eq!(labels, vec!["reporting", "penalties"]);
    }

    #[test]
    fn identical_strings_embed_identically() {
        let p = MockProvider::new(0);
        let v = p.embed(&["hello world".into(), "hello world".into(), "other".into()]).unwrap();
        assert_eq!(v[0], v[1]);
        assert_ne!(v[0], v[2]);
        assert!((v[0].iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_rate_extremes() {
        let chunk = DocumentChunk::new("d", 0, "The reporting rules apply.").unwrap();
        let topics = vec![Topic::new("reporting").unwrap()];
        let req = render_generation_prompt(&chunk, &topics, &topics[0], &[])
            .unwrap()
            .with_samples(6);
        let all_dup = MockProvider::with_settings(
            1,
            MockSettings {
                duplicate_rate: 1.0,
                ..Default::default()
            },
        );
        let out = all_dup.chat(&req).unwrap().completions;
        assert!(out.iter().all(|q| q == &out[0]));
        assert!(out[0].contains("reporting"));

        let none_dup = MockProvider::with_settings(
            1,
            MockSettings {
                duplicate_rate: 0.0,
                ..Default::default()
            },
        );
        let out = none_dup.chat(&req).unwrap().completions;
        let distinct: std::collections::BTreeSet<_> = out.iter().collect();
        assert_eq!(distinct.len(), 6);
    }
}
