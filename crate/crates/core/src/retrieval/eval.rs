use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{dot, norm, AdapterModel, EmbeddingStore};
use crate::error::{Error, Result};

/// A held-out expert question and the chunk(s) that answer it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestQuery {
    pub query_id: String,
    pub gold_chunk_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryError {
    pub query_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub top_k_accuracy: BTreeMap<usize, f64>,
    pub per_query_rank: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<QueryError>,
}

impl RetrievalResult {
    pub fn evaluated(&self) -> usize {
        self.per_query_rank.len()
    }

    /// Aligned text table of top-k accuracies in percent.
    pub fn table(&self, label: &str) -> String {
        let mut head = format!("{:<14}", "adapter");
        let mut row = format!("{label:<14}");
        for (k, acc) in &self.top_k_accuracy {
            head.push_str(&format!("{:>10}", format!("top-{k}")));
            row.push_str(&format!("{:>10}", format!("{:.2}", acc * 100.0)));
        }
        format!("{head}\n{row}\n")
    }
}

fn unit(adapter: &AdapterModel, v: &[f64]) -> Result<Option<Vec<f64>>> {
    let mut t = adapter.transform(v)?;
    let n = norm(&t);
    if n == 0.0 {
        return Ok(None);
    }
    t.iter_mut().for_each(|x| *x /= n);
    Ok(Some(t))
}

/// Ranks every candidate chunk by adapter-space cosine similarity to each
/// query. A query's rank is that of its best-placed gold chunk; equal scores
/// are ordered by chunk id. Queries whose embedding or gold chunks are missing
/// are reported in `errors` and left out of the accuracies.
pub fn evaluate_topk(
    adapter: &AdapterModel,
    queries: &[TestQuery],
    store: &EmbeddingStore,
    candidates: &[String],
    ks: &[usize],
) -> Result<RetrievalResult> {
    adapter.validate()?;
    if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Contract(format!(
            "ks must be positive and strictly ascending, got {ks:?}"
        )));
    }
    let mut pool: Vec<(&str, Vec<f64>)> = Vec::with_capacity(candidates.len());
    for id in candidates {
        let v = store
            .get(id)
            .ok_or_else(|| Error::Validation(format!("no embedding for candidate chunk {id}")))?;
        let u = unit(adapter, v)?
            .ok_or_else(|| Error::Contract(format!("candidate chunk {id} maps to the zero vector")))?;
        pool.push((id.as_str(), u));
    }
    pool.sort_by(|a, b| a.0.cmp(b.0));
    pool.dedup_by(|a, b| a.0 == b.0);

    let mut ranks = BTreeMap::new();
    let mut errors = Vec::new();
    for q in queries {
        let fail = |message: String| QueryError {
            query_id: q.query_id.clone(),
            message,
        };
        let Some(qv) = store.get(&q.query_id) else {
            errors.push(fail("query has no embedding".into()));
            continue;
        };
        let Some(qu) = unit(adapter, qv)? else {
            errors.push(fail("query maps to the zero vector".into()));
            continue;
        };
        let gold: Vec<usize> = q
            .gold_chunk_ids
            .iter()
            .filter_map(|g| pool.binary_search_by(|c| c.0.cmp(g)).ok())
            .collect();
        if gold.is_empty() {
            errors.push(fail(format!(
                "gold chunk(s) {:?} not in candidate pool",
                q.gold_chunk_ids
            )));
            continue;
        }
        let scores: Vec<f64> = pool.iter().map(|(_, u)| dot(&qu, u)).collect();
        // Pool is in id order, so lower index wins ties.
        let rank = gold
            .iter()
            .map(|&g| {
                1 + scores
                    .iter()
                    .enumerate()
                    .filter(|&(j, &s)| s > scores[g] || (s == scores[g] && j < g))
                    .count()
            })
            .min()
            .expect("gold is non-empty");
        ranks.insert(q.query_id.clone(), rank);
    }
    for e in &errors {
        log::warn!("retrieval: skipping {}: {}", e.query_id, e.message);
    }
    let n = ranks.len();
    let top_k_accuracy = ks
        .iter()
        .map(|&k| {
            let hits = ranks.values().filter(|&&r| r <= k).count();
            (k, if n == 0 { 0.0 } else { hits as f64 / n as f64 })
        })
        .collect();
    Ok(RetrievalResult {
        top_k_accuracy,
        per_query_rank: ranks,
        errors,
    })
}
