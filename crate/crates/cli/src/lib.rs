//! Batch front end: configuration, orchestration and report files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod config;
pub mod output;
pub mod run;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] lichnerowicz::Error),
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Category written to `error.report`.
    pub fn kind(&self) -> &'static str {
        use lichnerowicz::Error as E;
        match self {
            Self::Parse { .. } => "parse-error",
            Self::Validation(_) => "validation-error",
            Self::Io { .. } | Self::Core(E::Io(_) | E::Format(_) | E::DomainMismatch(_)) => {
                "io-error"
            }
            Self::Core(E::Nonconvergence(_) | E::SaddleLost(_) | E::LinearSolve(_)) => {
                "solver-error"
            }
            Self::Core(_) => "spec-error",
            Self::Json(_) => "io-error",
        }
    }
}

/// Process exit status of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    /// Every requested verdict passed.
    Pass,
    /// A verdict failed or the solver gave up.
    Fail,
    /// The admissibility conditions fail or nonexistence was detected.
    Infeasible,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Infeasible => 2,
        }
    }
}
