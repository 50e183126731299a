// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or convolution shape that cannot be lowered.
    #[error("shape error in `{field}`: {reason}")]
    Shape { field: &'static str, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("index {index} out of range: {reason}")]
    Index { index: usize, reason: String },

    /// Every violated graph invariant, each naming its layer.
    #[error("invalid graph: {}", .0.join("; "))]
    Graph(Vec<String>),

    #[error("invalid schedule ({rule}): {detail}")]
    Schedule { rule: &'static str, detail: String },

    #[error("coordinate ({row}, {col}) outside {rows}x{cols} mesh")]
    Coord {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("search space too large for exhaustive enumeration: {0}")]
    SizeGuard(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn schedule(rule: &'static str, detail: impl Into<String>) -> Self {
        Error::Schedule {
            rule,
            detail: detail.into(),
        }
    }

    /// True for errors caused by user-supplied configuration rather than a
    /// failure while running.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::Shape { .. } | Error::Graph(_)
        )
    }
}
