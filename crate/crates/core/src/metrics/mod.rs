//! Efficiency, topic coverage, Bloom-level distribution and response-preference
//! metrics, plus the aggregated run report.

pub mod bloom;
pub mod preference;
pub mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentChunk, Topic};
use crate::error::{Error, Result};
use crate::generator::{GeneratedQA, Pipeline};

pub use bloom::{classify_bloom, BloomHistogram, BloomLabel, BloomLevel};
pub use preference::{preference_metrics, PreferenceConfig, PreferenceStat, PreferenceSummary};
pub use report::{aggregate_report, MetricsReport, PipelineMetrics};

/// Unique questions surviving dedup over sampled generations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyStat {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<Pipeline>,
    #[serde(default)]
    pub n_shots: usize,
    pub llm_calls: u64,
    pub unique_after_dedup: u64,
    /// Exact ratio.
    pub efficiency: f64,
}

impl EfficiencyStat {
    /// Ratio rounded to four decimal places.
    pub fn rounded(&self) -> f64 {
        (self.efficiency * 1e4).round() / 1e4
    }

    pub fn percent(&self) -> f64 {
        self.efficiency * 100.0
    }

    pub fn labeled(mut self, pipeline: Pipeline, n_shots: usize) -> Self {
        self.pipeline = Some(pipeline);
        self.n_shots = n_shots;
        self
    }
}

impl fmt::Display for EfficiencyStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}%", self.rounded() * 100.0)
    }
}

pub fn efficiency(calls: u64, unique: u64) -> Result<EfficiencyStat> {
    if calls == 0 {
        return Err(Error::Contract("efficiency needs at least one call".into()));
    }
    if unique > calls {
        return Err(Error::Contract(format!(
            "unique count {unique} exceeds call count {calls}"
        )));
    }
    Ok(EfficiencyStat {
        pipeline: None,
        n_shots: 0,
        llm_calls: calls,
        unique_after_dedup: unique,
        efficiency: unique as f64 / calls as f64,
    })
}

/// How baseline questions without topic provenance are attributed to topics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribution {
    /// Every counted question carried its topic.
    Provenance,
    /// At least one question was matched by case-insensitive label substring.
    Substring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocCoverage {
    pub covered: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageStat {
    pub per_doc: BTreeMap<String, DocCoverage>,
    pub tc: f64,
    /// Documents with no topics, left out of the mean.
    pub excluded_docs: Vec<String>,
    pub attribution: Attribution,
}

/// Mean over documents of the fraction of their topics touched by at least one
/// question. A document's topics are the union of its chunks' topics.
/// Questions with a topic count through provenance; others match topic labels
/// as case-insensitive substrings of the question text.
pub fn topic_coverage(chunks: &[DocumentChunk], generated: &[GeneratedQA]) -> CoverageStat {
    let mut doc_topics: BTreeMap<&str, BTreeSet<&Topic>> = BTreeMap::new();
    let mut chunk_doc: HashMap<&str, &str> = HashMap::new();
    for c in chunks {
        doc_topics.entry(c.doc_id.as_str()).or_default().extend(c.topics.iter());
        chunk_doc.insert(c.id.as_str(), c.doc_id.as_str());
    }
    let mut covered: BTreeMap<&str, BTreeSet<&Topic>> = BTreeMap::new();
    let mut attribution = Attribution::Provenance;
    for q in generated {
        let Some(doc) = chunk_doc.get(q.source_chunk_id.as_str()) else {
            log::warn!("question {} references unknown chunk {}", q.id, q.source_chunk_id);
            continue;
        };
        let topics = &doc_topics[doc];
        let hit = covered.entry(doc).or_default();
        match &q.topic {
            Some(t) => {
                if let Some(t) = topics.get(t) {
                    hit.insert(t);
                }
            }
            None => {
                attribution = Attribution::Substring;
                let text = q.question.to_lowercase();
                hit.extend(topics.iter().filter(|t| text.contains(t.label())));
            }
        }
    }
    let mut per_doc = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut sum = 0.0;
    for (doc, topics) in &doc_topics {
        if topics.is_empty() {
            log::warn!("document {doc} has no topics; excluded from coverage");
            excluded.push(doc.to_string());
            continue;
        }
        let c = covered.get(doc).map_or(0, BTreeSet::len);
        sum += c as f64 / topics.len() as f64;
        per_doc.insert(
            doc.to_string(),
            DocCoverage {
                covered: c,
                total: topics.len(),
            },
        );
    }
    let tc = if per_doc.is_empty() {
        0.0
    } else {
        sum / per_doc.len() as f64
    };
    CoverageStat {
        per_doc,
        tc,
        excluded_docs: excluded,
        attribution,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn efficiency_table_values() {
        let cases = [(17622, 7140, 0.4052), (17400, 3658, 0.2102), (51100, 8030, 0.1571)];
        for (calls, unique, expected) in cases {
            let e = efficiency(calls, unique).unwrap();
            assert_eq!(e.rounded(), expected);
            assert!(e.efficiency >= 0.0 && e.efficiency <= 1.0);
        }
        assert_eq!(efficiency(17622, 7140).unwrap().to_string(), "40.52%");
    }

    #[test]
    fn efficiency_contracts() {
        assert!(efficiency(0, 0).is_err());
        assert!(efficiency(3, 4).is_err());
        assert_eq!(efficiency(5, 0).unwrap().efficiency, 0.0);
    }

    fn chunk(doc: &str, seq: u64, topics: &[&str]) -> DocumentChunk {
        let mut c = DocumentChunk::new(doc, seq, &format!("{doc} {seq}")).unwrap();
        c.topics = topics.iter().map(|t| Topic::new(t).unwrap()).collect();
        c
    }

    fn q(chunk: &DocumentChunk, topic: Option<&str>, text: &str) -> GeneratedQA {
        GeneratedQA {
            id: format!("q-{text}"),
            question: text.into(),
            answer: None,
            source_chunk_id: chunk.id.clone(),
            style: None,
            topic: topic.map(|t| Topic::new(t).unwrap()),
            combo_id: 0,
            sample_idx: 0,
            pipeline: Pipeline::Expertgenqa,
            template_id: None,
        }
    }

    #[test]
    fn full_and_mixed_coverage() {
        let a = chunk("d1", 0, &["w", "x", "y", "z"]);
        let b = chunk("d2", 0, &["u", "v"]);
        let chunks = vec![a.clone(), b.clone()];
        let all: Vec<_> = ["w", "x", "y", "z"]
            .iter()
            .map(|t| q(&a, Some(t), t))
            .chain(["u", "v"].iter().map(|t| q(&b, Some(t), t)))
            .collect();
        assert_eq!(topic_coverage(&chunks, &all).tc, 1.0);

        let mixed = vec![q(&a, Some("w"), "1"), q(&a, Some("x"), "2"), q(&b, Some("u"), "3"), q(&b, Some("v"), "4")];
        // (2/4 + 2/2) / 2
        let stat = topic_coverage(&chunks, &mixed);
        assert_eq!(stat.tc, (0.5 + 1.0) / 2.0);
        assert_eq!(stat.per_doc["d1"], DocCoverage { covered: 2, total: 4 });
        assert_eq!(stat.attribution, Attribution::Provenance);
    }

    #[test]
    fn substring_attribution_for_baselines() {
        let a = chunk("d1", 0, &["penalties", "accident reporting"]);
        let stat = topic_coverage(std::slice::from_ref(&a), &[q(&a, None, "What are the PENALTIES for late filing?")]);
        assert_eq!(stat.tc, 0.5);
        assert_eq!(stat.attribution, Attribution::Substring);
    }

    #[test]
    fn topicless_docs_excluded() {
        let a = chunk("d1", 0, &["x"]);
        let b = chunk("d2", 0, &[]);
        let stat = topic_coverage(&[a.clone(), b], &[q(&a, Some("x"), "x")]);
        assert_eq!(stat.tc, 1.0);
        assert_eq!(stat.excluded_docs, vec!["d2".to_string()]);
    }

    #[test]
    fn chunks_of_one_doc_pool_topics() {
        let a = chunk("d1", 0, &["x", "y"]);
        let b = chunk("d1", 1, &["y", "z"]);
        let stat = topic_coverage(&[a.clone(), b.clone()], &[q(&b, Some("y"), "1")]);
        assert_eq!(stat.per_doc["d1"], DocCoverage { covered: 1, total: 3 });
    }

    #[test]
    fn provenance_topic_not_in_chunk_is_ignored() {
        let a = chunk("d1", 0, &["x"]);
        let stat = topic_coverage(std::slice::from_ref(&a), &[q(&a, Some("other"), "1")]);
        assert_eq!(stat.tc, 0.0);
    }
}
