//! Matrix-Tree Theorem kernel: Laplacian sub-matrices, partition functions
//! over spanning (`Z_T`) and dependency (`Z_D`) trees, and edge marginals
//! under the single-root distribution.
//!
//! Determinants go through LU with partial pivoting on a column-rescaled
//! copy of the weights. Rescaling column `j` by `1/s_j` multiplies both
//! partition functions by `∏ 1/s_j` and leaves every marginal unchanged, so
//! the log partition is corrected by `Σ log s_j` and marginals are read off
//! the rescaled system directly.

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::{Lu, Matrix};

/// Determinants below this (after rescaling) are treated as zero.
const SINGULAR_DET: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianVariant {
    /// In-degrees ignore ROOT edges and row 0 holds the ROOT edge weights.
    SingleRoot,
    /// `(degree − W)[1:, 1:]`, degrees counting ROOT edges.
    Unconstrained,
}

/// `n×n` Laplacian sub-matrix over the word nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianSubmatrix {
    pub entries: Matrix,
    pub variant: LaplacianVariant,
}

/// Single-root Laplacian of a raw `(n+1)×(n+1)` weight matrix.
pub(crate) fn single_root_laplacian_of(w: &Matrix) -> Matrix {
    let n = w.rows() - 1;
    let mut l = Matrix::zeros(n, n);
    for b in 0..n {
        single_root_column_into(n, b, |h| w[(h, b + 1)], |a, v| l[(a, b)] = v);
    }
    l
}

/// Writes column `b` of the single-root Laplacian, given `incoming(h)`,
/// the weight of `h → b + 1`.
#[inline]
pub(crate) fn single_root_column_into(
    n: usize,
    b: usize,
    incoming: impl Fn(usize) -> f64,
    mut put: impl FnMut(usize, f64),
) {
    let degree: f64 = (1..=n).map(&incoming).sum();
    put(0, incoming(0));
    for a in 1..n {
        let v = if a == b { degree } else { -incoming(a + 1) };
        put(a, v);
    }
}

fn unconstrained_laplacian_of(w: &Matrix) -> Matrix {
    let n = w.rows() - 1;
    Matrix::from_fn(n, n, |a, b| {
        let dep = b + 1;
        if a == b {
            (0..=n).map(|h| w[(h, dep)]).sum()
        } else {
            -w[(a + 1, dep)]
        }
    })
}

pub fn laplacian_single_root(g: &WeightedGraph) -> LaplacianSubmatrix {
    LaplacianSubmatrix {
        entries: single_root_laplacian_of(g.weights()),
        variant: LaplacianVariant::SingleRoot,
    }
}

pub fn laplacian_spanning(g: &WeightedGraph) -> LaplacianSubmatrix {
    LaplacianSubmatrix {
        entries: unconstrained_laplacian_of(g.weights()),
        variant: LaplacianVariant::Unconstrained,
    }
}

/// Copy of the weights with each word column divided by its maximum, plus
/// `Σ log max`. Fails when a word has no incoming weight at all.
pub(crate) fn column_rescaled(g: &WeightedGraph) -> Result<(Matrix, f64)> {
    let n = g.n();
    let mut w = g.weights().clone();
    let mut log_scale = 0.0;
    for dep in 1..=n {
        let s = (0..=n).map(|h| w[(h, dep)]).fold(0.0, f64::max);
        if s == 0.0 {
            return Err(Error::Degenerate(format!("word {dep} has no incoming edges")));
        }
        for h in 0..=n {
            w[(h, dep)] /= s;
        }
        log_scale += s.ln();
    }
    Ok((w, log_scale))
}

fn checked_log_det(lu: &Lu, what: &str) -> Result<f64> {
    let log_det = lu.log_abs_det();
    if lu.is_singular() || lu.det_sign() <= 0.0 || !log_det.is_finite() || log_det < SINGULAR_DET.ln() {
        return Err(Error::Degenerate(format!("{what} is zero or not positive")));
    }
    Ok(log_det)
}

/// `log Z_D`.
pub fn log_partition_dependency(g: &WeightedGraph) -> Result<f64> {
    let (w, log_scale) = column_rescaled(g)?;
    let lu = Lu::factor(&single_root_laplacian_of(&w));
    Ok(checked_log_det(&lu, "Z_D")? + log_scale)
}

/// `log Z_T`.
pub fn log_partition_spanning(g: &WeightedGraph) -> Result<f64> {
    let (w, log_scale) = column_rescaled(g)?;
    let lu = Lu::factor(&unconstrained_laplacian_of(&w));
    Ok(checked_log_det(&lu, "Z_T")? + log_scale)
}

/// `Z_D`, the total weight of all dependency trees. May overflow to `inf`
/// for long sentences; use [`log_partition_dependency`] there.
pub fn partition_dependency(g: &WeightedGraph) -> Result<f64> {
    log_partition_dependency(g).map(f64::exp)
}

/// `Z_T`, the total weight of all spanning trees.
pub fn partition_spanning(g: &WeightedGraph) -> Result<f64> {
    log_partition_spanning(g).map(f64::exp)
}

/// Edge marginals `p(i → j)` under the single-root distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    pub entries: Matrix,
}

impl MarginalTable {
    pub fn get(&self, head: usize, dep: usize) -> f64 {
        self.entries[(head, dep)]
    }

    /// ROOT-edge marginals `p(0 → j)` for `j = 1..=n`.
    pub fn root_row(&self) -> &[f64] {
        &self.entries.row(0)[1..]
    }

    /// Head distribution of word `dep`.
    pub fn column(&self, dep: usize) -> Vec<f64> {
        (0..self.entries.rows()).map(|h| self.entries[(h, dep)]).collect()
    }

    pub fn max_abs_diff(&self, other: &MarginalTable) -> f64 {
        self.entries.max_abs_diff(&other.entries)
    }
}

/// `B = (L̂⁻¹)ᵀ` for a raw weight matrix.
pub(crate) fn inverse_transpose(l: &Matrix) -> Result<Matrix> {
    let lu = Lu::factor(l);
    checked_log_det(&lu, "Laplacian determinant")?;
    Ok(lu.inverse().expect("non-singular").transpose())
}

/// Head distribution of word `dep` given weights `w` and `B = (L̂⁻¹)ᵀ`:
///
/// * `p(0 → dep) = w[0][dep] · B[0][c]`
/// * `p(h → dep) = w[h][dep] · ([c ≠ 0] B[c][c] − [h ≠ 1] B[h−1][c])`
///
/// with `c = dep − 1`.
pub(crate) fn marginal_column(w: &Matrix, b: &Matrix, dep: usize) -> Vec<f64> {
    let n = w.rows() - 1;
    let c = dep - 1;
    // ROOT weights live only in row 0 of L̂, word weights in the degree
    // (diagonal, except row 0) and off-diagonal entries.
    let x = if c == 0 { 0.0 } else { b[(c, c)] };
    let mut out = Vec::with_capacity(n + 1);
    out.push(w[(0, dep)] * b[(0, c)]);
    for h in 1..=n {
        let y = if h == 1 { 0.0 } else { b[(h - 1, c)] };
        out.push(w[(h, dep)] * (x - y));
    }
    out
}

pub(crate) fn marginals_given_inverse(w: &Matrix, b: &Matrix) -> MarginalTable {
    let n = w.rows() - 1;
    let mut m = Matrix::zeros(n + 1, n + 1);
    for dep in 1..=n {
        for (h, p) in marginal_column(w, b, dep).into_iter().enumerate() {
            m[(h, dep)] = p;
        }
    }
    MarginalTable { entries: m }
}

pub fn marginals(g: &WeightedGraph) -> Result<MarginalTable> {
    let (w, _) = column_rescaled(g)?;
    let b = inverse_transpose(&single_root_laplacian_of(&w))?;
    Ok(marginals_given_inverse(&w, &b))
}
