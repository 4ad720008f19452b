//! Layout of stage artifacts inside the work directory.

use std::path::{Path, PathBuf};

use qagen::generator::Pipeline;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct WorkDir {
    root: PathBuf,
}

impl WorkDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        WorkDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn chunks(&self) -> PathBuf {
        self.root.join("chunks.jsonl")
    }

    pub fn expert_pool(&self) -> PathBuf {
        self.root.join("expert_pool.jsonl")
    }

    pub fn expert_train(&self) -> PathBuf {
        self.root.join("expert_train.jsonl")
    }

    pub fn expert_test(&self) -> PathBuf {
        self.root.join("expert_test.jsonl")
    }

    pub fn topics(&self) -> PathBuf {
        self.root.join("topics.jsonl")
    }

    pub fn cache(&self) -> PathBuf {
        self.root.join("cache.jsonl")
    }

    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings.jsonl")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn stage(&self, pipeline: Pipeline, file: &str) -> PathBuf {
        self.root.join(pipeline.as_str()).join(file)
    }

    pub fn generated(&self, p: Pipeline) -> PathBuf {
        self.stage(p, "generated.jsonl")
    }

    pub fn run_report(&self, p: Pipeline) -> PathBuf {
        self.stage(p, "run.json")
    }

    pub fn usage(&self, p: Pipeline) -> PathBuf {
        self.stage(p, "usage.json")
    }

    pub fn deduped(&self, p: Pipeline) -> PathBuf {
        self.stage(p, "deduped.jsonl")
    }

    pub fn dedup_report(&self, p: Pipeline) -> PathBuf {
        self.stage(p, "dedup.json")
    }

    pub fn metrics(&self, p: Pipeline) -> PathBuf {
        self.stage(p, "metrics.json")
    }

    pub fn bloom_csv(&self, p: Pipeline) -> PathBuf {
        self.stage(p, "bloom.csv")
    }

    pub fn preference_csv(&self, p: Pipeline) -> PathBuf {
        self.stage(p, "preference.csv")
    }

    pub fn pairs(&self, p: Pipeline) -> PathBuf {
        self.stage(p, "pairs.jsonl")
    }

    pub fn adapter(&self, p: Pipeline) -> PathBuf {
        self.stage(p, "adapter.json")
    }

    pub fn train_report(&self, p: Pipeline) -> PathBuf {
        self.stage(p, "train.json")
    }

    pub fn retrieval(&self, p: Pipeline) -> PathBuf {
        self.stage(p, "retrieval.json")
    }

    /// Fails with a dependency error naming `command` if `path` is absent.
    pub fn require(path: PathBuf, command: &'static str) -> Result<PathBuf, CliError> {
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError::Dependency { path, command })
        }
    }
}
