//! Dense weighted dependency graphs.
//!
//! Entry `[i][j]` of the weight matrix is the weight of the edge `i → j`
//! (head `i`, dependent `j`). Node 0 is ROOT: it never has incoming edges and
//! no node has a self-loop.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

/// First invariant a weight matrix breaks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("matrix must be square, got {rows} rows with a row of length {cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix side must be at least 2, got {0}")]
    TooSmall(usize),
    #[error("weight [{i}][{j}] is not finite")]
    NonFinite { i: usize, j: usize },
    #[error("weight [{i}][{j}] is negative")]
    Negative { i: usize, j: usize },
    #[error("diagonal weight [{i}][{i}] is not zero")]
    Diagonal { i: usize },
    #[error("weight [{i}][0] is an edge into ROOT")]
    RootInEdge { i: usize },
}

/// Checks the weight-matrix invariants and reports the first violation.
///
/// Scans row by row; within a cell the checks go finite, non-negative,
/// diagonal, ROOT column.
pub fn validate(rows: &[Vec<f64>]) -> std::result::Result<(), Violation> {
    let side = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != side) {
        return Err(Violation::NotSquare {
            rows: side,
            cols: bad.len(),
        });
    }
    if side < 2 {
        return Err(Violation::TooSmall(side));
    }
    for (i, row) in rows.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            if !w.is_finite() {
                return Err(Violation::NonFinite { i, j });
            }
            if w < 0.0 {
                return Err(Violation::Negative { i, j });
            }
            if i == j && w != 0.0 {
                return Err(Violation::Diagonal { i });
            }
            if j == 0 && w != 0.0 {
                return Err(Violation::RootInEdge { i });
            }
        }
    }
    Ok(())
}

/// Immutable graph over `n` words plus ROOT.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    weights: Matrix,
}

impl WeightedGraph {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        validate(rows)?;
        let weights = Matrix::from_rows(rows).expect("validated as square");
        Ok(WeightedGraph {
            n: rows.len() - 1,
            weights,
        })
    }

    /// Graph over `n` words with `φ(i → j) = f(i, j)` on every legal edge.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..=n)
            .map(|i| {
                (0..=n)
                    .map(|j| if j == 0 || i == j { 0.0 } else { f(i, j) })
                    .collect()
            })
            .collect();
        Self::from_rows(&rows)
    }

    /// Complete graph with every legal edge weighted 1.
    pub fn unit_complete(n: usize) -> Self {
        Self::from_fn(n, |_, _| 1.0).expect("unit graph is valid")
    }

    /// Three words A=1, B=2, C=3 with unit edges R→A, R→C, A→B, A→C, C→B,
    /// B→A. Exactly three dependency trees: two rooted at A, one at C.
    pub fn bias_demo() -> Self {
        let edges = [(0, 1), (0, 3), (1, 2), (1, 3), (3, 2), (2, 1)];
        Self::from_fn(3, |i, j| if edges.contains(&(i, j)) { 1.0 } else { 0.0 })
            .expect("bias demo graph is valid")
    }

    /// Number of words.
    pub fn n(&self) -> usize {
        self.n
    }

    /// `φ(head → dep)`.
    #[inline]
    pub fn weight(&self, head: usize, dep: usize) -> f64 {
        self.weights[(head, dep)]
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.weights.to_rows()
    }

    /// Same graph with the ROOT edge weights replaced.
    pub fn with_root_weights(&self, root_weights: &[f64]) -> Result<Self> {
        if root_weights.len() != self.n {
            return Err(Error::Dimension(format!(
                "expected {} ROOT weights, got {}",
                self.n,
                root_weights.len()
            )));
        }
        let mut rows = self.to_rows();
        rows[0][1..].copy_from_slice(root_weights);
        Self::from_rows(&rows)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphDocument {
    n: usize,
    weights: Vec<Vec<f64>>,
}

/// Parses the JSON interchange format `{"n": .., "weights": [[..], ..]}`.
pub fn read_graph(bytes: &[u8]) -> Result<WeightedGraph> {
    let doc: GraphDocument = serde_json::from_slice(bytes)?;
    let side = doc.n + 1;
    if doc.n == 0 || doc.weights.len() != side || doc.weights.iter().any(|r| r.len() != side) {
        let shape = doc.weights.iter().map(Vec::len).collect::<Vec<_>>();
        return Err(Error::Dimension(format!(
            "n = {} needs a {side}×{side} matrix, got row lengths {shape:?}",
            doc.n
        )));
    }
    WeightedGraph::from_rows(&doc.weights)
}

pub fn write_graph(g: &WeightedGraph) -> Vec<u8> {
    let doc = GraphDocument {
        n: g.n,
        weights: g.to_rows(),
    };
    serde_json::to_vec(&doc).expect("finite weights always serialize")
}

/// Distribution of independently drawn edge weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightDistributionSpec {
    Uniform { lo: f64, hi: f64 },
    /// Normal(mean, std) conditioned on being non-negative. `std = 0` gives
    /// the constant `mean`.
    TruncatedNormal { mean: f64, std: f64 },
    Exponential { rate: f64 },
}

/// Truncated-normal draws use plain rejection; below this acceptance rate
/// the parameters are refused instead of spinning.
const MIN_TRUNCATED_MEAN_IN_STDS: f64 = -3.0;

impl WeightDistributionSpec {
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        match *self {
            Self::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi) {
                    return bad(format!("uniform needs 0 <= lo < hi, got lo={lo}, hi={hi}"));
                }
            }
            Self::TruncatedNormal { mean, std } => {
                if !(mean.is_finite() && std.is_finite() && std >= 0.0) {
                    return bad(format!("truncated normal needs finite mean and std >= 0, got {mean}, {std}"));
                }
                if std == 0.0 && mean <= 0.0 {
                    return bad("constant weight must be positive".into());
                }
                if std > 0.0 && mean / std < MIN_TRUNCATED_MEAN_IN_STDS {
                    return bad(format!("mean {mean} is too far below 0 for std {std}"));
                }
            }
            Self::Exponential { rate } => {
                if !(rate.is_finite() && rate > 0.0) {
                    return bad(format!("exponential needs rate > 0, got {rate}"));
                }
            }
        }
        Ok(())
    }

    /// Draws one weight. Assumes [`check`](Self::check) passed.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => rng.gen_range(lo..hi),
            Self::TruncatedNormal { mean, std } => {
                if std == 0.0 {
                    return mean;
                }
                let normal = Normal::new(mean, std).expect("checked parameters");
                loop {
                    let x = normal.sample(rng);
                    if x >= 0.0 {
                        return x;
                    }
                }
            }
            Self::Exponential { rate } => Exp::new(rate).expect("checked parameters").sample(rng),
        }
    }
}

impl fmt::Display for WeightDistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            Self::TruncatedNormal { mean, std } => write!(f, "tnormal:{mean},{std}"),
            Self::Exponential { rate } => write!(f, "exp:{rate}"),
        }
    }
}

/// Parses `uniform:LO,HI`, `tnormal:MEAN,STD` or `exp:RATE`.
impl FromStr for WeightDistributionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, params) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidSpec(format!("expected KIND:PARAMS, got {s:?}")))?;
        let nums = params
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidSpec(format!("{s:?}: {e}")))?;
        let spec = match (kind.trim(), nums.as_slice()) {
            ("uniform", &[lo, hi]) => Self::Uniform { lo, hi },
            ("tnormal" | "truncated-normal" | "normal", &[mean, std]) => {
                Self::TruncatedNormal { mean, std }
            }
            ("exp" | "exponential", &[rate]) => Self::Exponential { rate },
            _ => return Err(Error::InvalidSpec(format!("unrecognized distribution {s:?}"))),
        };
        spec.check()?;
        Ok(spec)
    }
}

/// Random graph over `n` words; each legal edge gets an independent draw.
pub fn random_graph(n: usize, spec: &WeightDistributionSpec, seed: u64) -> Result<WeightedGraph> {
    random_graph_with(n, spec, &mut rng::seeded(seed))
}

pub fn random_graph_with<R: Rng + ?Sized>(
    n: usize,
    spec: &WeightDistributionSpec,
    rng: &mut R,
) -> Result<WeightedGraph> {
    if n == 0 {
        return Err(Error::Dimension("a graph needs at least one word".into()));
    }
    spec.check()?;
    WeightedGraph::from_fn(n, |_, _| spec.draw(rng))
}
