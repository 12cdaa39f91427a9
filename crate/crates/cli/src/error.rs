//! Exit-code taxonomy: 0 ok, 2 I/O or usage, 3 QC block, 4 data mismatch,
//! 5 training failure.

use rvrecon::dataset::DatasetError;
use rvrecon::model::ModelError;
use rvrecon::pipeline::PipelineError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0:#}")]
    Io(anyhow::Error),
    #[error("{0}")]
    QcBlocked(String),
    #[error("{0:#}")]
    Mismatch(anyhow::Error),
    #[error("{0:#}")]
    Training(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 2,
            CliError::QcBlocked(_) => 3,
            CliError::Mismatch(_) => 4,
            CliError::Training(_) => 5,
        }
    }

    pub fn io(e: impl Into<anyhow::Error>) -> Self {
        CliError::Io(e.into())
    }

    pub fn mismatch(e: impl Into<anyhow::Error>) -> Self {
        CliError::Mismatch(e.into())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::NoTrainableScans(_) => CliError::Training(e.into()),
            PipelineError::Model(ref m) => match m {
                ModelError::ShapeMismatch(_) | ModelError::Dataset(_) => {
                    CliError::Mismatch(e.into())
                }
                ModelError::Io(_)
                | ModelError::BadMagic
                | ModelError::ChecksumMismatch
                | ModelError::FormatVersionMismatch { .. }
                | ModelError::Format(_) => CliError::Io(e.into()),
                _ => CliError::Training(e.into()),
            },
            PipelineError::Dataset(ref d) => match d {
                DatasetError::Io(_) => CliError::Io(e.into()),
                _ => CliError::Mismatch(e.into()),
            },
            PipelineError::Scan(..) | PipelineError::Metric(_) => CliError::Mismatch(e.into()),
            PipelineError::InvalidConfig(_) | PipelineError::Io(_) | PipelineError::Json(_) => {
                CliError::Io(e.into())
            }
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        PipelineError::Model(e).into()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
