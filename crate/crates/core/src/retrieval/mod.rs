//! Linear embedding adapter trained with in-batch InfoNCE, and top-k retrieval
//! evaluation over frozen embeddings.

mod adapter;
mod eval;
pub mod toy;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::EmbeddingRecord;
use crate::jsonl;

pub use adapter::{info_nce_loss, train_adapter, AdapterModel, BatchPair, Optimizer, TrainConfig, TrainOutcome};
pub use eval::{evaluate_topk, QueryError, RetrievalResult, TestQuery};

pub const DEFAULT_TEMPERATURE: f64 = 0.1;

/// Cosine similarity of two non-zero vectors of equal dimension.
pub fn cosine_similarity(q: &[f64], d: &[f64]) -> Result<f64> {
    if q.len() != d.len() {
        return Err(Error::Contract(format!(
            "dimension mismatch: {} vs {}",
            q.len(),
            d.len()
        )));
    }
    let nq = norm(q);
    let nd = norm(d);
    if nq == 0.0 || nd == 0.0 {
        return Err(Error::Contract("cosine similarity of a zero vector".into()));
    }
    Ok((dot(q, d) / (nq * nd)).clamp(-1.0, 1.0))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A training example: a generated question and the chunk it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub query_id: String,
    pub chunk_id: String,
}

/// Embeddings keyed by owner id, all of one dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = EmbeddingRecord>) -> Result<Self> {
        let mut store = EmbeddingStore::new();
        for r in records {
            store.insert(r.owner_id, r.vector)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, owner_id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let owner_id = owner_id.into();
        if vector.is_empty() {
            return Err(Error::Validation(format!("embedding for {owner_id} is empty")));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "embedding for {owner_id} has non-finite entries"
            )));
        }
        if self.vectors.is_empty() {
            self.dim = vector.len();
        } else if vector.len() != self.dim {
            return Err(Error::Validation(format!(
                "embedding for {owner_id} has dimension {}, store has {}",
                vector.len(),
                self.dim
            )));
        }
        self.vectors.insert(owner_id, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, owner_id: &str) -> Option<&[f64]> {
        self.vectors.get(owner_id).map(Vec::as_slice)
    }

    pub fn contains(&self, owner_id: &str) -> bool {
        self.vectors.contains_key(owner_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_records(jsonl::read::<EmbeddingRecord>(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let records: Vec<EmbeddingRecord> = self
            .vectors
            .iter()
            .map(|(k, v)| EmbeddingRecord {
                owner_id: k.clone(),
                vector: v.clone(),
            })
            .collect();
        jsonl::write(path, &records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        let v = [0.3, -1.2, 2.0];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((cosine_similarity(&v, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &v[..2]), Err(Error::Contract(_))));
        assert!(cosine_similarity(&[1.0], &v).is_err());
    }

    #[test]
    fn store_dims_and_round_trip() {
        let mut s = EmbeddingStore::new();
        s.insert("a", vec![1.0, 2.0]).unwrap();
        assert!(s.insert("b", vec![1.0]).is_err());
        assert!(s.insert("c", vec![f64::NAN, 0.0]).is_err());
        s.insert("b", vec![0.1, 1.0 / 3.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.jsonl");
        s.save(&p).unwrap();
        assert_eq!(EmbeddingStore::load(&p).unwrap(), s);
    }
}
