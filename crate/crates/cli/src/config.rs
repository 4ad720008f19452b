//! Run configuration: a TOML file plus `--set section.key=value` overrides.

use std::path::{Path, PathBuf};

use qagen::corpus::DEFAULT_MAX_CHUNK_CHARS;
use qagen::dedup::DedupConfig;
use qagen::gateway::mock::MockSettings;
use qagen::gateway::{RetryPolicy, DEFAULT_IN_FLIGHT};
use qagen::generator::{GenerationConfig, Pipeline};
use qagen::metrics::PreferenceConfig;
use qagen::retrieval::{Optimizer, TrainConfig, DEFAULT_TEMPERATURE};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderSection {
    pub kind: ProviderKind,
    /// Global seed for every stochastic component.
    pub seed: u64,
    pub base_url: String,
    pub chat_model: String,
    pub reward_model: String,
    pub embedding_model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub in_flight: usize,
    /// Persist responses to `cache.jsonl` in the work directory.
    pub cache: bool,
    pub embed_batch: usize,
    pub retry: RetryPolicy,
    pub mock: MockSettings,
}

impl Default for ProviderSection {
    fn default() -> Self {
        ProviderSection {
            kind: ProviderKind::Mock,
            seed: 0,
            base_url: "https://api.openai.com/v1".into(),
            chat_model: "gpt-4o".into(),
            reward_model: "nvidia/llama-3.1-nemotron-70b-reward".into(),
            embedding_model: "text-embedding-3-small".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
            in_flight: DEFAULT_IN_FLIGHT,
            cache: true,
            embed_batch: 64,
            retry: RetryPolicy::default(),
            mock: MockSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FewshotPool {
    /// The whole expert pool, as when all expert questions are the test set.
    #[default]
    All,
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub test_fraction: f64,
    pub max_chunk_chars: usize,
    pub fewshot_pool: FewshotPool,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            test_fraction: 1.0,
            max_chunk_chars: DEFAULT_MAX_CHUNK_CHARS,
            fewshot_pool: FewshotPool::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DedupSection {
    pub threshold: f64,
    pub mode: qagen::dedup::OverlapMode,
    /// Also drop questions colliding with the expert test split.
    pub against_test: bool,
}

impl Default for DedupSection {
    fn default() -> Self {
        let d = DedupConfig::default();
        DedupSection {
            threshold: d.threshold,
            mode: d.mode,
            against_test: true,
        }
    }
}

impl DedupSection {
    pub fn core(&self) -> DedupConfig {
        DedupConfig {
            threshold: self.threshold,
            mode: self.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub bloom: bool,
    pub preference: bool,
    pub preference_config: PreferenceConfig,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            bloom: true,
            preference: true,
            preference_config: PreferenceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalSection {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub temperature: f64,
    pub optimizer: Optimizer,
    pub ks: Vec<usize>,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        RetrievalSection {
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            temperature: DEFAULT_TEMPERATURE,
            optimizer: t.optimizer,
            ks: vec![1, 5],
        }
    }
}

impl RetrievalSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed,
            temperature: self.temperature,
            optimizer: self.optimizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    /// Pre-chunked JSONL input `{doc_id, seq, text}`.
    pub chunks: Option<PathBuf>,
    /// Directory of `.txt` documents, chunked at paragraph boundaries.
    pub documents: Option<PathBuf>,
    pub expert_pool: PathBuf,
}

impl Default for IoSection {
    fn default() -> Self {
        IoSection {
            chunks: Some(PathBuf::from("chunks.jsonl")),
            documents: None,
            expert_pool: PathBuf::from("expert_qa.jsonl"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub provider: ProviderSection,
    pub corpus: CorpusSection,
    pub generation: GenerationConfig,
    pub dedup: DedupSection,
    pub metrics: MetricsSection,
    pub retrieval: RetrievalSection,
    pub io: IoSection,
}

impl RunConfig {
    /// Reads `path` (if any), applies `key=value` overrides and validates.
    /// Relative input paths resolve against the config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("reading {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        if let Some(dir) = path.and_then(Path::parent) {
            cfg.io.resolve_against(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.generation.validate()?;
        self.dedup.core().validate()?;
        self.metrics.preference_config.validate()?;
        self.retrieval.train_config(self.provider.seed).validate()?;
        let ks = &self.retrieval.ks;
        if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config(format!(
                "retrieval.ks must be positive and strictly ascending, got {ks:?}"
            )));
        }
        if !(0.0..=1.0).contains(&self.corpus.test_fraction) {
            return Err(CliError::Config("corpus.test_fraction must be in [0, 1]".into()));
        }
        if self.corpus.max_chunk_chars == 0 {
            return Err(CliError::Config("corpus.max_chunk_chars must be positive".into()));
        }
        if self.provider.embed_batch == 0 {
            return Err(CliError::Config("provider.embed_batch must be positive".into()));
        }
        if self.io.chunks.is_none() && self.io.documents.is_none() {
            return Err(CliError::Config("set io.chunks or io.documents".into()));
        }
        Ok(())
    }

    /// The configuration as embedded in reports.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn pipelines(&self) -> Vec<Pipeline> {
        Pipeline::ALL.to_vec()
    }
}

impl IoSection {
    fn resolve_against(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(p) = self.chunks.as_mut() {
            fix(p);
        }
        if let Some(p) = self.documents.as_mut() {
            fix(p);
        }
        fix(&mut self.expert_pool);
    }
}

/// Sets a dotted key. The value is read as a TOML literal when it parses as
/// one, otherwise as a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
