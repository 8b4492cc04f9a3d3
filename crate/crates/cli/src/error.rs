use std::path::PathBuf;

use smpsim_core::analysis::AnalysisError;
use smpsim_core::engine::SimError;
use smpsim_core::io::CsvError;
use smpsim_core::netlist::NetlistError;
use smpsim_core::scenarios::ScenarioError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: CsvError },
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    /// 1 for numeric failures, 2 for usage and I/O errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 1,
            _ => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn csv(path: impl Into<PathBuf>) -> impl FnOnce(CsvError) -> CliError {
        let path = path.into();
        move |source| CliError::Csv { path, source }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::MissingTran | SimError::InvalidOptions(_) | SimError::Device(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(format!("simulation failed: {e}")),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::MissingChannel(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(format!("analysis failed: {e}")),
        }
    }
}

impl From<NetlistError> for CliError {
    fn from(e: NetlistError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Usage(e.to_string())
    }
}
