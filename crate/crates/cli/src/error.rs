use serde::Serialize;
use thiserror::Error;

use ultradiff::heat::HeatError;
use ultradiff::multitopo::TopologyError;
use ultradiff::operators::OperatorError;
use ultradiff::padic::PadicError;
use ultradiff::spectra::SpectraError;
use ultradiff::toposort::SortError;
use ultradiff::ultraindex::IndexError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Sort(#[from] SortError),
    #[error(transparent)]
    Padic(#[from] PadicError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Heat(#[from] HeatError),
}

#[derive(Serialize)]
pub struct ErrorRecord<'a> {
    pub error: &'a str,
    pub exit_code: u8,
    pub message: String,
}

impl CliError {
    pub fn parse(msg: impl Into<String>) -> Self {
        CliError::Parse(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Topology(_) => 10,
            CliError::Index(_) => 11,
            CliError::Sort(_) => 12,
            CliError::Padic(_) => 13,
            CliError::Operator(_) => 14,
            CliError::Spectra(_) => 15,
            CliError::Heat(_) => 16,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "ParseError",
            CliError::Io { .. } => "IoError",
            CliError::Topology(_) => "TopologyError",
            CliError::Index(_) => "IndexError",
            CliError::Sort(_) => "SortError",
            CliError::Padic(_) => "PadicError",
            CliError::Operator(_) => "OperatorError",
            CliError::Spectra(_) => "SpectraError",
            CliError::Heat(_) => "HeatError",
        }
    }

    pub fn record(&self) -> ErrorRecord<'static> {
        ErrorRecord {
            error: self.name(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        }
    }
}
