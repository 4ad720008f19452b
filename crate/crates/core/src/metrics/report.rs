//! Per-pipeline metric bundles, the combined report, and CSV exports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bloom::BloomLabel;
use super::preference::{PreferenceStat, PreferenceSummary};
use super::{Attribution, BloomHistogram, CoverageStat, EfficiencyStat};
use crate::error::{Error, Result};
use crate::generator::Pipeline;
use crate::retrieval::RetrievalResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineMetrics {
    pub pipeline: Pipeline,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<EfficiencyStat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageStat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bloom: Option<BloomHistogram>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preference: Option<PreferenceSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalResult>,
}

impl PipelineMetrics {
    pub fn new(pipeline: Pipeline) -> Self {
        PipelineMetrics {
            pipeline,
            efficiency: None,
            coverage: None,
            bloom: None,
            preference: None,
            retrieval: None,
        }
    }

    fn is_empty(&self) -> bool {
        self.efficiency.is_none()
            && self.coverage.is_none()
            && self.bloom.is_none()
            && self.preference.is_none()
            && self.retrieval.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// The resolved run configuration.
    pub config: serde_json::Value,
    pub pipelines: BTreeMap<Pipeline, PipelineMetrics>,
    /// Retrieval with the untrained (identity) adapter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_retrieval: Option<RetrievalResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

pub fn aggregate_report(
    config: serde_json::Value,
    pipelines: Vec<PipelineMetrics>,
    baseline_retrieval: Option<RetrievalResult>,
) -> Result<MetricsReport> {
    let mut map = BTreeMap::new();
    let mut notes = Vec::new();
    for m in pipelines {
        if m.is_empty() {
            continue;
        }
        if let Some(c) = &m.coverage {
            if c.attribution == Attribution::Substring {
                notes.push(format!(
                    "{}: topic coverage uses label-substring attribution",
                    m.pipeline
                ));
            }
            if !c.excluded_docs.is_empty() {
                notes.push(format!(
                    "{}: {} document(s) without topics excluded from coverage",
                    m.pipeline,
                    c.excluded_docs.len()
                ));
            }
        }
        if let Some(b) = &m.bloom {
            if b.uncertain > 0 {
                notes.push(format!(
                    "{}: {} Bloom label(s) uncertain and excluded",
                    m.pipeline, b.uncertain
                ));
            }
        }
        if map.insert(m.pipeline, m).is_some() {
            return Err(Error::Validation("pipeline reported twice".into()));
        }
    }
    if map.is_empty() && baseline_retrieval.is_none() {
        return Err(Error::Validation(
            "no metric results to report; run `metrics` or `eval` first".into(),
        ));
    }
    Ok(MetricsReport {
        config,
        pipelines: map,
        baseline_retrieval,
        notes,
    })
}

#[derive(Serialize)]
struct BloomRow<'a> {
    question_id: &'a str,
    level: &'a str,
    uncertain: bool,
}

pub fn write_bloom_csv(path: &Path, labels: &[(String, BloomLabel)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for (id, l) in labels {
        w.serialize(BloomRow {
            question_id: id,
            level: l.level.as_str(),
            uncertain: l.uncertain,
        })
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct PreferenceRow<'a> {
    question_id: &'a str,
    n_scored: usize,
    chosen_reward: f64,
    rejected_reward: f64,
    rejected_length_ratio: f64,
    reward_gap: f64,
    complete: bool,
}

pub fn write_preference_csv(path: &Path, stats: &[PreferenceStat]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for s in stats {
        w.serialize(PreferenceRow {
            question_id: &s.question_id,
            n_scored: s.rewards.len(),
            chosen_reward: s.chosen_reward,
            rejected_reward: s.rejected_reward,
            rejected_length_ratio: s.rejected_length_ratio,
            reward_gap: s.reward_gap,
            complete: s.complete,
        })
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Validation(format!("writing {}: {e}", path.display()))
}
