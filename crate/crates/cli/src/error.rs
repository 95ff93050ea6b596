use std::path::Path;

use thiserror::Error;

use sqra::experiments::ExperimentError;
use sqra::mesh::MeshError;
use sqra::physics::PhysicsError;

/// Errors of the command-line driver, grouped by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, configuration or input files (exit 2).
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    /// Numerical failure or failed validation (exit 1).
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn mesh_input(path: &Path, e: MeshError) -> Self {
        match e {
            MeshError::Io(source) => CliError::io(path, source),
            other => CliError::Usage(format!("{}: {other}", path.display())),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failure(_) => 1,
            CliError::Usage(_) | CliError::Io { .. } => 2,
        }
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::Io(source) => CliError::Io { path: "mesh".into(), source },
            MeshError::Parse { .. } => CliError::Usage(e.to_string()),
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl From<PhysicsError> for CliError {
    fn from(e: PhysicsError) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Invalid(msg) => CliError::Usage(msg),
            ExperimentError::Mesh(m) => m.into(),
            other => CliError::Failure(other.to_string()),
        }
    }
}
