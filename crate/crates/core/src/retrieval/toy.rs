//! Synthetic retrieval corpora for exercising the trainer.
//!
//! Each document owns a random direction in a low-dimensional signal
//! subspace. Every embedding (document or query) adds an independent,
//! larger nuisance component in a separate subspace, and the whole space is
//! then hidden under a random rotation. Raw cosine similarity is dominated by
//! the nuisance, while a linear map onto the signal subspace separates the
//! documents.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{EmbeddingStore, Pair, TestQuery};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub docs: usize,
    pub signal_dim: usize,
    pub nuisance_dim: usize,
    /// Expected norm of the nuisance component; the signal has unit norm.
    pub nuisance_scale: f64,
    /// Expected norm of the noise added to a query's copy of its doc signal.
    pub query_noise: f64,
    pub train_per_doc: usize,
    pub test_per_doc: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            docs: 64,
            signal_dim: 24,
            nuisance_dim: 32,
            nuisance_scale: 2.0,
            query_noise: 0.2,
            train_per_doc: 8,
            test_per_doc: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub store: EmbeddingStore,
    pub chunk_ids: Vec<String>,
    pub train_pairs: Vec<Pair>,
    pub test_queries: Vec<TestQuery>,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, norm: f64) -> Array1<f64> {
    let scale = if n == 0 { 0.0 } else { norm / (n as f64).sqrt() };
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix.
fn rotation(rng: &mut ChaCha8Rng, dim: usize) -> Array2<f64> {
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v = gaussian(rng, dim, 1.0);
        for b in &basis {
            let p = v.dot(b);
            v.scaled_add(-p, b);
        }
        let n = v.dot(&v).sqrt();
        if n > 1e-6 {
            basis.push(v / n);
        }
    }
    let flat: Vec<f64> = basis.into_iter().flatten().collect();
    Array2::from_shape_vec((dim, dim), flat).expect("square")
}

pub fn toy_corpus(cfg: &ToyConfig) -> Result<ToyCorpus> {
    if cfg.docs < 2 || cfg.signal_dim == 0 || cfg.train_per_doc == 0 {
        return Err(Error::Config(
            "toy corpus needs at least 2 docs, a signal dimension and training queries".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.signal_dim + cfg.nuisance_dim;
    let rot = rotation(&mut rng, dim);
    let signals: Vec<Array1<f64>> = (0..cfg.docs)
        .map(|_| {
            let s = gaussian(&mut rng, cfg.signal_dim, 1.0);
            let n = s.dot(&s).sqrt();
            s / n
        })
        .collect();
    let mut embed = |signal: &Array1<f64>, noise: f64| -> Vec<f64> {
        let s = signal + &gaussian(&mut rng, cfg.signal_dim, noise);
        let nuisance = gaussian(&mut rng, cfg.nuisance_dim, cfg.nuisance_scale);
        let mut x = s.to_vec();
        x.extend(nuisance.iter());
        rot.dot(&Array1::from(x)).to_vec()
    };

    let mut store = EmbeddingStore::new();
    let mut chunk_ids = Vec::with_capacity(cfg.docs);
    let mut train_pairs = Vec::new();
    let mut test_queries = Vec::new();
    for (d, s) in signals.iter().enumerate() {
        let cid = format!("toy-c{d:03}");
        store.insert(cid.clone(), embed(s, 0.0))?;
        for j in 0..cfg.train_per_doc {
            let qid = format!("toy-q{d:03}-{j}");
            store.insert(qid.clone(), embed(s, cfg.query_noise))?;
            train_pairs.push(Pair {
                query_id: qid,
                chunk_id: cid.clone(),
            });
        }
        for j in 0..cfg.test_per_doc {
            let qid = format!("toy-t{d:03}-{j}");
            store.insert(qid.clone(), embed(s, cfg.query_noise))?;
            test_queries.push(TestQuery {
                query_id: qid,
                gold_chunk_ids: vec![cid.clone()],
            });
        }
        chunk_ids.push(cid);
    }
    Ok(ToyCorpus {
        store,
        chunk_ids,
        train_pairs,
        test_queries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = rotation(&mut rng, 8);
        let eye = r.dot(&r.t());
        for ((i, j), v) in eye.indexed_iter() {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn shape_and_determinism() {
        let cfg = ToyConfig::default();
        let a = toy_corpus(&cfg).unwrap();
        assert_eq!(a.chunk_ids.len(), 64);
        assert_eq!(a.train_pairs.len(), 512);
        assert_eq!(a.test_queries.len(), 128);
        assert_eq!(a.store.dim(), 56);
        let b = toy_corpus(&cfg).unwrap();
        assert_eq!(a.store, b.store);
    }
}
