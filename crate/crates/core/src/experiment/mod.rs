//! The commands behind `srgan-bench`: dataset synthesis, training,
//! inference, evaluation, the cross-dataset matrix and report merging.

mod commands;
mod matrix;
mod report;

use thiserror::Error;

pub use commands::{
    append_row, checkpoint_context, cmd_eval, eval_network, cmd_infer, cmd_synth, cmd_train, generate, EvalOptions, InferSummary,
    SynthOptions, EVAL_CSV, MANIFEST_FILE,
};
pub use matrix::{cmd_matrix, config_hash, ColumnCheck, MatrixConfig, MatrixResult, MISSING};
pub use report::{cmd_report, merge_reports, REPORT_CSV, REPORT_JSON};

use crate::archive::ArchiveError;
use crate::data::DataError;
use crate::metrics::MetricsError;
use crate::nn::NnError;
use crate::train::TrainError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("matrix incomplete; missing cells: {}", .missing.join(", "))]
    Incomplete { missing: Vec<String>, code: i32 },
}

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

fn archive_code(e: &ArchiveError) -> i32 {
    match e {
        ArchiveError::Header(_) => EXIT_USAGE,
        _ => EXIT_IO,
    }
}

fn data_code(e: &DataError) -> i32 {
    match e {
        DataError::Io(_) | DataError::Decode(_) | DataError::Encode(_) | DataError::UnsupportedBitDepth(_) => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn nn_code(e: &NnError) -> i32 {
    match e {
        NnError::Archive(a) => archive_code(a),
        _ => EXIT_USAGE,
    }
}

impl ExperimentError {
    /// Process exit code: 2 usage/config, 3 numerical abort, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Usage(_) => EXIT_USAGE,
            ExperimentError::Io(_) => EXIT_IO,
            ExperimentError::Incomplete { code, .. } => *code,
            ExperimentError::Data(e) => data_code(e),
            ExperimentError::Nn(e) => nn_code(e),
            ExperimentError::Metrics(e) => match e {
                MetricsError::Data(d) => data_code(d),
                _ => EXIT_USAGE,
            },
            ExperimentError::Train(e) => match e {
                TrainError::NonFinite(_) => EXIT_NUMERICAL,
                TrainError::Io(_) => EXIT_IO,
                TrainError::Archive(a) => archive_code(a),
                TrainError::Data(d) => data_code(d),
                TrainError::Nn(n) => nn_code(n),
                TrainError::Tensor(crate::tensor::TensorError::NonFinite { .. }) => EXIT_NUMERICAL,
                _ => EXIT_USAGE,
            },
        }
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Usage(msg.into())
}
