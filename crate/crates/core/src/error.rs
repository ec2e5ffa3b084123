use std::path::PathBuf;

use crate::rotation::Axis;

/// Errors produced anywhere in the alignment pipeline.
#[derive(Debug, thiserror::Error)]
pub enum AlignError {
    #[error("empty set")]
    EmptySet,

    #[error("degenerate mean direction (|mean| = {norm:.3e}){}", axis_suffix(.axis))]
    DegenerateMean { norm: f64, axis: Option<Axis> },

    #[error("matrix has rank < 2, projection onto SO(3) is not unique")]
    DegenerateMatrix,

    #[error("iteration did not converge after {iterations} iterations")]
    NonConvergent { iterations: usize },

    #[error("histograms have different bin counts ({left} vs {right})")]
    MismatchedBins { left: usize, right: usize },

    #[error("invalid axis mapping: {0}")]
    InvalidMapping(String),

    #[error("every signed-permutation hypothesis touched a degenerate axis pairing")]
    AllHypothesesDegenerate,

    #[error("rotation set carries no timestamps")]
    MissingTimestamps,

    #[error("no index pairs to evaluate")]
    EmptyPairing,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid rotation matrix: {0}")]
    InvalidRotation(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("row {row}: quaternion norm {norm} deviates from 1 by more than 1e-3")]
    NonUnitQuaternion { row: usize, norm: f64 },

    #[error("{0}: file contains no pose rows")]
    EmptyFile(PathBuf),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

fn axis_suffix(axis: &Option<Axis>) -> String {
    match axis {
        Some(a) => format!(" on axis {a}"),
        None => String::new(),
    }
}

impl AlignError {
    /// Short machine-readable tag, used by the CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            AlignError::EmptySet => "EmptySet",
            AlignError::DegenerateMean { .. } => "DegenerateMean",
            AlignError::DegenerateMatrix => "DegenerateMatrix",
            AlignError::NonConvergent { .. } => "NonConvergent",
            AlignError::MismatchedBins { .. } => "MismatchedBins",
            AlignError::InvalidMapping(_) => "InvalidMapping",
            AlignError::AllHypothesesDegenerate => "AllHypothesesDegenerate",
            AlignError::MissingTimestamps => "MissingTimestamps",
            AlignError::EmptyPairing => "EmptyPairing",
            AlignError::InvalidConfig(_) => "InvalidConfig",
            AlignError::InvalidRotation(_) => "InvalidRotation",
            AlignError::Parse { .. } => "ParseError",
            AlignError::NonUnitQuaternion { .. } => "NonUnitQuaternion",
            AlignError::EmptyFile(_) => "EmptyFile",
            AlignError::Io(_) => "IoError",
            AlignError::Csv(e) if e.is_io_error() => "IoError",
            AlignError::Json(e) if e.is_io() => "IoError",
            AlignError::Csv(_) | AlignError::Json(_) => "ParseError",
        }
    }

    /// True for a closed output pipe, which the CLI treats as a normal exit.
    pub fn is_broken_pipe(&self) -> bool {
        let io = match self {
            AlignError::Io(e) => Some(e.kind()),
            AlignError::Json(e) => e.io_error_kind(),
            _ => None,
        };
        io == Some(std::io::ErrorKind::BrokenPipe)
    }

    pub(crate) fn with_axis(self, axis: Axis) -> Self {
        match self {
            AlignError::DegenerateMean { norm, .. } => AlignError::DegenerateMean {
                norm,
                axis: Some(axis),
            },
            other => other,
        }
    }
}

pub type Result<T, E = AlignError> = std::result::Result<T, E>;
