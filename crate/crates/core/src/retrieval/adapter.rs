use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingStore, Pair, DEFAULT_TEMPERATURE};
use crate::error::{Error, Result};
use crate::text::derive_seed;

/// A square linear map applied to both queries and documents before cosine
/// similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AdapterFile", into = "AdapterFile")]
pub struct AdapterModel {
    pub weights: Array2<f64>,
    pub temperature: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdapterFile {
    temperature: f64,
    weights: Vec<Vec<f64>>,
}

impl From<AdapterModel> for AdapterFile {
    fn from(m: AdapterModel) -> Self {
        AdapterFile {
            temperature: m.temperature,
            weights: m.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

impl TryFrom<AdapterFile> for AdapterModel {
    type Error = Error;
    fn try_from(f: AdapterFile) -> Result<Self> {
        let rows = f.weights.len();
        let cols = f.weights.first().map_or(0, Vec::len);
        if f.weights.iter().any(|r| r.len() != cols) {
            return Err(Error::Validation("adapter weight rows differ in length".into()));
        }
        let flat: Vec<f64> = f.weights.into_iter().flatten().collect();
        let weights = Array2::from_shape_vec((rows, cols), flat)
            .map_err(|e| Error::Validation(format!("adapter weights: {e}")))?;
        let m = AdapterModel {
            weights,
            temperature: f.temperature,
        };
        m.validate()?;
        Ok(m)
    }
}

impl AdapterModel {
    pub fn identity(dim: usize, temperature: f64) -> Self {
        AdapterModel {
            weights: Array2::eye(dim),
            temperature,
        }
    }

    pub fn dim_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn dim_out(&self) -> usize {
        self.weights.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Validation(format!(
                "adapter temperature {} must be positive",
                self.temperature
            )));
        }
        if self.dim_in() == 0 || self.dim_out() == 0 {
            return Err(Error::Validation("adapter has an empty weight matrix".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation("adapter has non-finite weights".into()));
        }
        Ok(())
    }

    pub fn transform(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim_in() {
            return Err(Error::Contract(format!(
                "vector of dimension {} given to a {}-input adapter",
                v.len(),
                self.dim_in()
            )));
        }
        Ok(self.weights.dot(&Array1::from(v.to_vec())).to_vec())
    }

    pub fn is_identity(&self) -> bool {
        self.dim_in() == self.dim_out() && self.weights == Array2::<f64>::eye(self.dim_in())
    }
}

/// One (query, positive document) pair of a batch. `doc_id` identifies the
/// document so that a doc repeated in the batch is not used as its own
/// negative.
#[derive(Debug, Clone, Copy)]
pub struct BatchPair<'a> {
    pub query: &'a [f64],
    pub doc: &'a [f64],
    pub doc_id: &'a str,
}

fn stack(rows: impl Iterator<Item = Vec<f64>>, dim: usize) -> Array2<f64> {
    let flat: Vec<f64> = rows.flatten().collect();
    let n = flat.len() / dim.max(1);
    Array2::from_shape_vec((n, dim), flat).expect("rows share the dimension")
}

/// Row-normalizes `a`, returning the unit rows and the original norms.
fn normalize_rows(a: &Array2<f64>, what: &str) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms = a.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(i) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::Contract(format!("{what} {i} maps to the zero vector")));
    }
    let unit = a / &norms.view().insert_axis(Axis(1));
    Ok((unit, norms))
}

/// Back-propagates through `u = a / |a|`.
fn through_normalization(grad_u: &Array2<f64>, unit: &Array2<f64>, norms: &Array1<f64>) -> Array2<f64> {
    let proj = (grad_u * unit).sum_axis(Axis(1));
    (grad_u - &(unit * &proj.insert_axis(Axis(1)))) / norms.view().insert_axis(Axis(1))
}

/// Mean in-batch InfoNCE loss over cosine similarities in adapter space, and
/// its gradient with respect to the adapter weights.
///
/// For query `i` the candidates are every document in the batch except other
/// occurrences of its own `doc_id`. The loss is NaN when the adapter has grown
/// so large that transformed norms overflow.
pub fn info_nce_loss(adapter: &AdapterModel, batch: &[BatchPair<'_>]) -> Result<(f64, Array2<f64>)> {
    let b = batch.len();
    if b < 2 {
        return Err(Error::Contract(format!(
            "InfoNCE needs at least 2 pairs for in-batch negatives, got {b}"
        )));
    }
    let dim = adapter.dim_in();
    if let Some(p) = batch.iter().find(|p| p.query.len() != dim || p.doc.len() != dim) {
        return Err(Error::Contract(format!(
            "pair for {} does not match adapter dimension {dim}",
            p.doc_id
        )));
    }
    let tau = adapter.temperature;
    let q = stack(batch.iter().map(|p| p.query.to_vec()), dim);
    let d = stack(batch.iter().map(|p| p.doc.to_vec()), dim);
    let wt = adapter.weights.t();
    let (u, nu) = normalize_rows(&q.dot(&wt), "query")?;
    let (v, nv) = normalize_rows(&d.dot(&wt), "document")?;
    if nu.iter().chain(nv.iter()).any(|n| !n.is_finite()) {
        return Ok((f64::NAN, Array2::zeros(adapter.weights.dim())));
    }
    let logits = u.dot(&v.t()) / tau;

    let mut loss = 0.0;
    let mut g = Array2::<f64>::zeros((b, b));
    for i in 0..b {
        let allowed: Vec<usize> = (0..b)
            .filter(|&j| j == i || batch[j].doc_id != batch[i].doc_id)
            .collect();
        let max = allowed
            .iter()
            .map(|&j| logits[[i, j]])
            .fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = allowed.iter().map(|&j| (logits[[i, j]] - max).exp()).sum();
        let lse = max + z.ln();
        // Rounding can push a near-zero term slightly negative.
        let li = lse - logits[[i, i]];
        loss += if li < 0.0 { 0.0 } else { li };
        for &j in &allowed {
            g[[i, j]] = (logits[[i, j]] - lse).exp();
        }
        g[[i, i]] -= 1.0;
    }
    let scale = 1.0 / (tau * b as f64);
    g *= scale;

    let grad_u = g.dot(&v);
    let grad_v = g.t().dot(&u);
    let grad_a = through_normalization(&grad_u, &u, &nu);
    let grad_b = through_normalization(&grad_v, &v, &nv);
    let grad_w = grad_a.t().dot(&q) + grad_b.t().dot(&d);
    Ok((loss / b as f64, grad_w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub temperature: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 1e-3,
            epochs: 3,
            seed: 0,
            temperature: DEFAULT_TEMPERATURE,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2 for in-batch negatives, got {}",
                self.batch_size
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub adapter: AdapterModel,
    /// Mean batch loss per epoch.
    pub loss_curve: Vec<f64>,
    pub steps: usize,
    pub pairs: usize,
}

struct Adam {
    m: Array2<f64>,
    v: Array2<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(dim: (usize, usize)) -> Self {
        Adam {
            m: Array2::zeros(dim),
            v: Array2::zeros(dim),
            t: 0,
        }
    }

    fn step(&mut self, w: &mut Array2<f64>, grad: &Array2<f64>, lr: f64) {
        self.t += 1;
        self.m = &self.m * Self::B1 + grad * (1.0 - Self::B1);
        self.v = &self.v * Self::B2 + &(grad * grad) * (1.0 - Self::B2);
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        ndarray::Zip::from(w).and(&self.m).and(&self.v).for_each(|w, &m, &v| {
            *w -= lr * (m / c1) / ((v / c2).sqrt() + Self::EPS);
        });
    }
}

/// Mini-batch training over shuffled pairs. A trailing batch with a single
/// pair is skipped since it has no negatives.
pub fn train_adapter(pairs: &[Pair], store: &EmbeddingStore, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut resolved = Vec::with_capacity(pairs.len());
    for p in pairs {
        let q = store.get(&p.query_id).ok_or_else(|| {
            Error::Validation(format!("no embedding for query {}", p.query_id))
        })?;
        let d = store.get(&p.chunk_id).ok_or_else(|| {
            Error::Validation(format!("no embedding for chunk {}", p.chunk_id))
        })?;
        resolved.push(BatchPair {
            query: q,
            doc: d,
            doc_id: p.chunk_id.as_str(),
        });
    }
    let mut adapter = AdapterModel::identity(store.dim(), cfg.temperature);
    if cfg.epochs > 0 && resolved.len() < 2 {
        return Err(Error::Validation(format!(
            "training needs at least 2 pairs, got {}",
            resolved.len()
        )));
    }
    let mut adam = Adam::new(adapter.weights.dim());
    let mut order: Vec<usize> = (0..resolved.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["epoch", &epoch.to_string()]));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let batch: Vec<BatchPair> = idx.iter().map(|&i| resolved[i]).collect();
            let (loss, grad) = info_nce_loss(&adapter, &batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    loss,
                    learning_rate: cfg.learning_rate,
                });
            }
            match cfg.optimizer {
                Optimizer::Adam => adam.step(&mut adapter.weights, &grad, cfg.learning_rate),
                Optimizer::Sgd => adapter.weights.scaled_add(-cfg.learning_rate, &grad),
            }
            if adapter.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    loss: f64::NAN,
                    learning_rate: cfg.learning_rate,
                });
            }
            total += loss;
            batches += 1;
            steps += 1;
        }
        let mean = total / batches.max(1) as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        curve.push(mean);
    }
    Ok(TrainOutcome {
        adapter,
        loss_curve: curve,
        steps,
        pairs: resolved.len(),
    })
}
