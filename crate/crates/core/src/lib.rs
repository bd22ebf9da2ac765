//! Sampling of single-root dependency trees from first-order weighted graphs.
//!
//! A sentence of `n` words is a dense `(n+1)×(n+1)` weight matrix with the
//! artificial ROOT at index 0. A *spanning tree* gives every word exactly one
//! head and has no cycles; a *dependency tree* is a spanning tree with exactly
//! one edge leaving ROOT. Trees are sampled with probability proportional to
//! the product of their edge weights, restricted to dependency trees.
//!
//! Samplers with replacement:
//!
//! * [`wilson::wilson_marginal`]: root edge drawn from the exact root
//!   marginals, remainder by Wilson's loop-erased random walk.
//! * [`wilson::wilson_reject`]: Wilson's sampler on the unconstrained graph,
//!   rejecting trees with more than one root edge.
//! * [`colbourn::colbourn_sample`]: ancestral sampling over heads with
//!   Sherman-Morrison updates of the Laplacian inverse.
//! * [`wilson::wilson_rc`]: the naive root-constrained variant. It is biased
//!   and only kept to demonstrate the bias.
//!
//! Samplers without replacement live in [`swor`], built on the autoregressive
//! state machine in [`colbourn`]. [`oracle`] enumerates trees exhaustively for
//! small graphs and is the ground truth used in tests.

pub mod colbourn;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod mtt;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod swor;
pub mod tree;
pub mod wilson;

pub use error::{Error, Result};
pub use graph::{WeightDistributionSpec, WeightedGraph};
pub use tree::Tree;

/// Index of the artificial ROOT node.
pub const ROOT: usize = 0;
