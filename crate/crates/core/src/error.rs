use thiserror::Error;

use crate::graph::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(#[from] Violation),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid weight distribution: {0}")]
    InvalidSpec(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    /// Z_D is zero, negative or not finite, or the Laplacian is singular.
    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("random walk stuck at node {node}: no positive incoming weight")]
    StuckWalk { node: usize },

    #[error("node {node} cannot be reached from root {root}")]
    Unreachable { root: usize, node: usize },

    #[error("all ROOT edges have zero weight")]
    NoRootEdges,

    #[error("rejection budget exhausted after {attempts} attempts (Z_T/Z_D is likely huge)")]
    RejectionBudget { attempts: usize },

    #[error("exhaustive enumeration supports at most {max} words, got {n}")]
    EnumerationTooLarge { n: usize, max: usize },
}
