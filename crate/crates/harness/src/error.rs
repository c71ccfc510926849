use std::path::{Path, PathBuf};

use g2p_core::analysis::AnalysisError;
use g2p_core::babbling::BabblingError;
use g2p_core::kinematics::KinematicsError;
use g2p_core::net::NetError;
use g2p_core::plant::PlantError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("malformed artifact {}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
    #[error("i/o error at {}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("{failed} of {total} trials failed")]
    TrialsFailed { failed: usize, total: usize },
    #[error(transparent)]
    Babbling(#[from] BabblingError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

impl HarnessError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub fn artifact(path: &Path, err: impl std::fmt::Display) -> Self {
        HarnessError::Artifact {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    /// Stable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "Config",
            HarnessError::MissingArtifact(_) => "MissingArtifact",
            HarnessError::Artifact { .. } => "Artifact",
            HarnessError::Io { .. } => "Io",
            HarnessError::TrialsFailed { .. } => "TrialsFailed",
            HarnessError::Babbling(_) => "Babbling",
            HarnessError::Plant(_) => "Plant",
            HarnessError::Net(_) => "Net",
            HarnessError::Analysis(_) => "Analysis",
            HarnessError::Kinematics(_) => "Kinematics",
        }
    }

    /// JSON error record for machine consumption.
    pub fn record(&self) -> serde_json::Value {
        let mut rec = json!({
            "status": "error",
            "kind": self.kind(),
            "message": self.to_string(),
        });
        match self {
            HarnessError::MissingArtifact(path)
            | HarnessError::Artifact { path, .. }
            | HarnessError::Io { path, .. } => {
                rec["path"] = json!(path.display().to_string());
            }
            HarnessError::TrialsFailed { failed, total } => {
                rec["failed"] = json!(failed);
                rec["total"] = json!(total);
            }
            _ => {}
        }
        rec
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
