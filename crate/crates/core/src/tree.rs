//! Head-array trees.
//!
//! `heads[k]` is the head of word `k + 1`; a value of 0 is an edge from ROOT.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

/// A spanning tree over words `1..=n`, stored as its head array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tree {
    heads: Vec<usize>,
}

impl Tree {
    /// Wraps a head array, checking that it is a spanning tree.
    pub fn new(heads: Vec<usize>) -> Result<Self> {
        let n = heads.len();
        if n == 0 {
            return Err(Error::InvalidTree("empty head array".into()));
        }
        if let Some(&h) = heads.iter().find(|&&h| h > n) {
            return Err(Error::InvalidTree(format!("head {h} out of range 0..={n}")));
        }
        if !is_spanning_tree(&heads, n) {
            return Err(Error::InvalidTree(format!("{heads:?} has a cycle or self-loop")));
        }
        Ok(Tree { heads })
    }

    pub(crate) fn from_heads_unchecked(heads: Vec<usize>) -> Self {
        debug_assert!(is_spanning_tree(&heads, heads.len()));
        Tree { heads }
    }

    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    pub fn n(&self) -> usize {
        self.heads.len()
    }

    /// Head of word `word` (1-based).
    pub fn head(&self, word: usize) -> usize {
        self.heads[word - 1]
    }

    pub fn root_edges(&self) -> usize {
        self.heads.iter().filter(|&&h| h == 0).count()
    }

    /// The word attached to ROOT, if there is exactly one.
    pub fn root_word(&self) -> Option<usize> {
        let mut roots = self.heads.iter().enumerate().filter(|(_, &h)| h == 0);
        match (roots.next(), roots.next()) {
            (Some((k, _)), None) => Some(k + 1),
            _ => None,
        }
    }

    pub fn is_dependency_tree(&self) -> bool {
        self.root_edges() == 1
    }

    /// Edges as `(head, dependent)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.heads.iter().enumerate().map(|(k, &h)| (h, k + 1))
    }

    pub fn weight(&self, g: &WeightedGraph) -> f64 {
        tree_weight(g, &self.heads)
    }

    pub fn log_weight(&self, g: &WeightedGraph) -> f64 {
        tree_log_weight(g, &self.heads)
    }
}

/// True iff following heads from every word reaches ROOT.
///
/// `heads` must have length `n` with entries in `0..=n`.
pub fn is_spanning_tree(heads: &[usize], n: usize) -> bool {
    if heads.len() != n {
        return false;
    }
    // 0 = unvisited, 1 = on the current path, 2 = known to reach ROOT
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    let mut path = Vec::with_capacity(n);
    for start in 1..=n {
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            let h = heads[v - 1];
            if h > n || h == v {
                return false;
            }
            v = h;
        }
        if state[v] == 1 {
            return false;
        }
        for u in path.drain(..) {
            state[u] = 2;
        }
    }
    true
}

/// Spanning tree with exactly one ROOT edge.
pub fn is_dependency_tree(heads: &[usize], n: usize) -> bool {
    is_spanning_tree(heads, n) && heads.iter().filter(|&&h| h == 0).count() == 1
}

/// `∏ φ(heads[i] → i)`.
pub fn tree_weight(g: &WeightedGraph, heads: &[usize]) -> f64 {
    heads
        .iter()
        .enumerate()
        .map(|(k, &h)| g.weight(h, k + 1))
        .product()
}

/// `Σ log φ(heads[i] → i)`; `-inf` when any edge weight is zero.
pub fn tree_log_weight(g: &WeightedGraph, heads: &[usize]) -> f64 {
    heads
        .iter()
        .enumerate()
        .map(|(k, &h)| g.weight(h, k + 1).ln())
        .sum()
}

/// One line of a sample file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub heads: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprob: Option<f64>,
}

impl TreeRecord {
    pub fn tree(&self) -> Result<Tree> {
        Tree::new(self.heads.clone())
    }
}
