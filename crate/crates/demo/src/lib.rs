//! Browser bindings. Every export takes plain values or a JSON string and
//! returns a JSON string; failures come back as `{"error": "..."}`.

use qagen::corpus::{chunk_document, DocumentChunk, ExpertQA, StyleCategory, StyleSet};
use qagen::dedup::{bigram_overlap_with, dedup_within, DedupConfig, OverlapMode};
use qagen::gateway::mock::{MockProvider, MockSettings};
use qagen::gateway::Gateway;
use qagen::generator::{GenerationConfig, Generator, TopicStore};
use qagen::metrics::{efficiency, topic_coverage};
use qagen::retrieval::toy::{toy_corpus, ToyConfig};
use qagen::retrieval::{evaluate_topk, train_adapter, AdapterModel, Optimizer, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn respond<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string()),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

fn mode(name: &str) -> Result<OverlapMode, String> {
    match name {
        "containment" => Ok(OverlapMode::Containment),
        "jaccard" => Ok(OverlapMode::Jaccard),
        other => Err(format!("unknown overlap mode {other:?}")),
    }
}

#[derive(Serialize)]
struct DedupRow {
    question: String,
    kept: bool,
    matched: Option<usize>,
    overlap: Option<f64>,
}

/// Near-duplicate filtering of newline-separated questions.
#[wasm_bindgen]
pub fn dedup_explorer(questions: &str, threshold: f64, overlap_mode: &str) -> String {
    respond((|| {
        let qs: Vec<&str> = questions.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let cfg = DedupConfig { threshold, mode: mode(overlap_mode)? };
        let out = dedup_within(&qs, &cfg).map_err(|e| e.to_string())?;
        let mut rows: Vec<DedupRow> = qs
            .iter()
            .map(|q| DedupRow { question: q.to_string(), kept: true, matched: None, overlap: None })
            .collect();
        for d in &out.dropped {
            rows[d.index].kept = false;
            rows[d.index].matched = Some(d.matched);
            rows[d.index].overlap = Some(d.overlap);
        }
        Ok(json!({ "rows": rows, "kept": out.kept.len(), "total": qs.len() }))
    })())
}

/// Overlap score of a single pair, for the explorer's hover readout.
#[wasm_bindgen]
pub fn pair_overlap(a: &str, b: &str, overlap_mode: &str) -> String {
    respond(mode(overlap_mode).map(|m| json!({ "overlap": bigram_overlap_with(a, b, m) })))
}

#[derive(Deserialize)]
#[serde(default)]
struct ToyRequest {
    docs: usize,
    nuisance_scale: f64,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
}

impl Default for ToyRequest {
    fn default() -> Self {
        ToyRequest { docs: 64, nuisance_scale: 2.0, epochs: 10, learning_rate: 1e-2, seed: 0 }
    }
}

/// Trains the adapter on the synthetic rotated corpus and reports top-k
/// before and after, plus the per-epoch loss.
#[wasm_bindgen]
pub fn train_toy_retrieval(request: &str) -> String {
    respond((|| {
        let req: ToyRequest = if request.trim().is_empty() {
            ToyRequest::default()
        } else {
            serde_json::from_str(request).map_err(|e| e.to_string())?
        };
        let toy_cfg = ToyConfig { docs: req.docs, nuisance_scale: req.nuisance_scale, seed: req.seed, ..Default::default() };
        let toy = toy_corpus(&toy_cfg).map_err(|e| e.to_string())?;
        let ks = [1, 5];
        let identity = AdapterModel::identity(toy.store.dim(), 0.1);
        let before = evaluate_topk(&identity, &toy.test_queries, &toy.store, &toy.chunk_ids, &ks)
            .map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            epochs: req.epochs,
            learning_rate: req.learning_rate,
            seed: req.seed,
            optimizer: Optimizer::Adam,
            ..Default::default()
        };
        let out = train_adapter(&toy.train_pairs, &toy.store, &cfg).map_err(|e| e.to_string())?;
        let after = evaluate_topk(&out.adapter, &toy.test_queries, &toy.store, &toy.chunk_ids, &ks)
            .map_err(|e| e.to_string())?;
        Ok(json!({
            "pairs": out.pairs,
            "test_queries": toy.test_queries.len(),
            "loss_curve": out.loss_curve,
            "before": before.top_k_accuracy,
            "after": after.top_k_accuracy,
        }))
    })())
}

const EXEMPLARS: &[(&str, &str)] = &[
    (StyleCategory::POLICY_APPLICATION, "Which rule applies when a required report is filed late?"),
    (StyleCategory::POLICY_APPLICATION, "What must an operator do before returning equipment to service?"),
    (StyleCategory::POLICY_APPLICATION, "How does the inspection interval change under a waiver?"),
    (StyleCategory::SCENARIO_BASED, "Suppose a crew finds a defect mid-trip; what happens next?"),
    (StyleCategory::SCENARIO_BASED, "If a signal fails during a storm, who must be notified?"),
    (StyleCategory::SCENARIO_BASED, "A permit expires overnight; can work continue in the morning?"),
    (StyleCategory::TERMINOLOGY_CLARIFICATION, "What does the term main track mean here?"),
    (StyleCategory::TERMINOLOGY_CLARIFICATION, "How is a qualified person defined in these rules?"),
    (StyleCategory::TERMINOLOGY_CLARIFICATION, "Does an inspection record mean the same as a log entry?"),
];

/// Runs the style-by-topic generator with the offline mock over pasted text
/// and reports the raw count, what survives dedup, and topic coverage.
#[wasm_bindgen]
pub fn simulate_generation(text: &str, k: usize, n_samples: u32, duplicate_rate: f64, seed: u64) -> String {
    respond((|| {
        let mut chunks: Vec<DocumentChunk> = chunk_document(text, 600)
            .iter()
            .enumerate()
            .map(|(i, t)| DocumentChunk::new("pasted", i as u64, t))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        if chunks.is_empty() {
            return Err("paste some text first".into());
        }
        let pool: Vec<ExpertQA> = EXEMPLARS
            .iter()
            .enumerate()
            .map(|(i, (style, q))| ExpertQA {
                id: format!("ex{i}"),
                question: q.to_string(),
                answer: String::new(),
                style: StyleCategory::new(*style),
                source_chunk_ids: vec![],
            })
            .collect();
        let settings = MockSettings { duplicate_rate: duplicate_rate.clamp(0.0, 1.0), ..Default::default() };
        let gw = Gateway::new(MockProvider::with_settings(seed, settings)).with_in_flight(1);
        let cfg = GenerationConfig {
            k,
            n: 2,
            n_samples,
            styles: StyleSet::default(),
            concurrency: 1,
            ..Default::default()
        };
        let mut store = TopicStore::default();
        let out = Generator::new(&gw, &cfg, seed)
            .run_expertgenqa(&mut chunks, &pool, &mut store)
            .map_err(|e| e.to_string())?;
        let questions: Vec<&str> = out.records.iter().map(|r| r.question.as_str()).collect();
        let deduped = dedup_within(&questions, &DedupConfig::default()).map_err(|e| e.to_string())?;
        let kept = qagen::dedup::select(&out.records, &deduped);
        let topics: usize = chunks.iter().map(|c| c.topics.len()).sum();
        let eff = if out.records.is_empty() {
            None
        } else {
            Some(efficiency(out.records.len() as u64, kept.len() as u64).map_err(|e| e.to_string())?.efficiency)
        };
        let sample: Vec<&str> = kept.iter().take(12).map(|r| r.question.as_str()).collect();
        Ok(json!({
            "chunks": chunks.len(),
            "topics": topics,
            "predicted": n_samples as usize * cfg.styles.len() * k * topics,
            "raw": out.records.len(),
            "kept": kept.len(),
            "efficiency": eff,
            "tc": topic_coverage(&chunks, &kept).tc,
            "sample": sample,
        }))
    })())
}
