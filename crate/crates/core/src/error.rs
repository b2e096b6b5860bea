use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("graph has no edges after cleaning")]
    EmptyGraph,

    #[error("node '{0}' is not in the graph")]
    UnknownNode(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("community {community} expands to {pairs} pairs (budget {budget})")]
    CommunityTooLarge {
        community: usize,
        pairs: u64,
        budget: u64,
    },

    #[error("no community survived thresholding")]
    NoCommunitiesFound,

    #[error("affiliation import {path}:{line}: {msg}")]
    ImportFormat {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("no node pair has a positive training weight")]
    EmptyTrainingSet,

    #[error("embedding norm {norm} of node {node} exceeds {limit}; lower the learning rate")]
    DivergenceDetected { node: usize, norm: f64, limit: f64 },

    #[error("training split contains fewer than two classes")]
    SingleClassSplit,

    #[error("node '{0}' has no embedding")]
    MissingNode(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
