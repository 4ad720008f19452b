//! Stage-by-stage pipeline driver with plain-file handoff in a work directory.

pub mod commands;
pub mod config;
pub mod workdir;

use std::path::PathBuf;

pub use config::RunConfig;
pub use workdir::WorkDir;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path} is missing; run `qagen {command}` first")]
    Dependency { path: PathBuf, command: &'static str },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Stage(String),
    #[error(transparent)]
    Core(#[from] qagen::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Dependency { .. } => "dependency",
            CliError::Config(_) => "config",
            CliError::Stage(_) => "stage",
            CliError::Core(e) => e.kind(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(qagen::Error::Config(_)) => 2,
            CliError::Dependency { .. } => 3,
            CliError::Stage(_) | CliError::Core(_) => 1,
        }
    }

    /// Single-line JSON diagnostic.
    pub fn to_line(&self) -> String {
        let mut obj = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
        });
        if let CliError::Dependency { command, path } = self {
            obj["requires"] = (*command).into();
            obj["path"] = path.display().to_string().into();
        }
        obj.to_string()
    }
}
