use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer}: {detail}")]
    Shape { layer: usize, detail: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("format error at byte offset {offset}: {detail}")]
    Format { offset: u64, detail: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("infeasible partition for node {node}: {detail}")]
    Partition { node: usize, detail: String },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("missing state for neighbor {neighbor} of node {node}")]
    MissingNeighbor { node: usize, neighbor: usize },

    #[error("divergence: non-finite parameters at node {node}, round {round}")]
    Divergence { node: usize, round: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn shape(layer: usize, detail: impl Into<String>) -> Self {
        Error::Shape {
            layer,
            detail: detail.into(),
        }
    }
}
