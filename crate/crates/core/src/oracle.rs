//! Exhaustive ground truth for small graphs.
//!
//! Every head assignment is enumerated with an odometer and filtered by
//! acyclicity. Nothing here shares code with the determinant or sampling
//! paths beyond the graph type itself.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{random_graph_with, WeightDistributionSpec, WeightedGraph};
use crate::linalg::{pairwise_sum, Matrix};
use crate::mtt::{self, MarginalTable};
use crate::rng;
use crate::tree::Tree;

/// Largest sentence the oracle enumerates (`n^n` assignments).
pub const MAX_ENUMERATION_WORDS: usize = 8;

#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pub n: usize,
    /// Every spanning tree with its weight, including zero-weight ones.
    pub spanning: Vec<(Tree, f64)>,
    /// Every dependency tree with its weight.
    pub dependency: Vec<(Tree, f64)>,
    pub z_t: f64,
    pub z_d: f64,
    /// `p(t) = φ(t) / Z_D`, aligned with `dependency`.
    pub probs: Vec<f64>,
    index: HashMap<Tree, usize>,
}

impl ExactDistribution {
    /// Position of a dependency tree in `dependency`.
    pub fn index_of(&self, tree: &Tree) -> Option<usize> {
        self.index.get(tree).copied()
    }

    pub fn prob(&self, tree: &Tree) -> f64 {
        self.index_of(tree).map_or(0.0, |k| self.probs[k])
    }

    /// Normalized distribution over all spanning trees, aligned with `spanning`.
    pub fn spanning_probs(&self) -> Vec<f64> {
        self.spanning.iter().map(|(_, w)| w / self.z_t).collect()
    }

    /// Dependency trees with positive probability.
    pub fn support(&self) -> impl Iterator<Item = (&Tree, f64)> {
        self.dependency
            .iter()
            .zip(&self.probs)
            .filter(|(_, &p)| p > 0.0)
            .map(|((t, _), &p)| (t, p))
    }
}

/// Weight recomputed edge by edge, last word first.
fn product_weight(g: &WeightedGraph, heads: &[usize]) -> f64 {
    let mut w = 1.0;
    for dep in (1..=heads.len()).rev() {
        w *= g.weights()[(heads[dep - 1], dep)];
    }
    w
}

fn acyclic(heads: &[usize], stamp: &mut [usize]) -> bool {
    // stamp[v] = start word whose walk visited v; 0 = unseen
    stamp.iter_mut().for_each(|s| *s = 0);
    for start in 1..=heads.len() {
        let mut v = start;
        while v != 0 && stamp[v] == 0 {
            stamp[v] = start;
            v = heads[v - 1];
        }
        if v != 0 && stamp[v] == start {
            return false;
        }
    }
    true
}

/// Enumerates all spanning and dependency trees of `g`.
pub fn enumerate(g: &WeightedGraph) -> Result<ExactDistribution> {
    let n = g.n();
    if n > MAX_ENUMERATION_WORDS {
        return Err(Error::EnumerationTooLarge {
            n,
            max: MAX_ENUMERATION_WORDS,
        });
    }
    // choices for word k: every node except k itself
    let choices: Vec<Vec<usize>> = (1..=n).map(|k| (0..=n).filter(|&h| h != k).collect()).collect();
    let mut digits = vec![0usize; n];
    let mut heads: Vec<usize> = choices.iter().map(|c| c[0]).collect();
    let mut stamp = vec![0usize; n + 1];
    let mut spanning = Vec::new();
    let mut dependency = Vec::new();

    loop {
        if acyclic(&heads, &mut stamp) {
            let w = product_weight(g, &heads);
            let tree = Tree::from_heads_unchecked(heads.clone());
            if heads.iter().filter(|&&h| h == 0).count() == 1 {
                dependency.push((tree.clone(), w));
            }
            spanning.push((tree, w));
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == n {
                return Ok(finish(n, spanning, dependency));
            }
            digits[k] += 1;
            if digits[k] < choices[k].len() {
                heads[k] = choices[k][digits[k]];
                break;
            }
            digits[k] = 0;
            heads[k] = choices[k][0];
            k += 1;
        }
    }
}

fn finish(n: usize, spanning: Vec<(Tree, f64)>, dependency: Vec<(Tree, f64)>) -> ExactDistribution {
    let z_t = pairwise_sum(&spanning.iter().map(|(_, w)| *w).collect::<Vec<_>>());
    let z_d = pairwise_sum(&dependency.iter().map(|(_, w)| *w).collect::<Vec<_>>());
    let probs = dependency
        .iter()
        .map(|(_, w)| if z_d > 0.0 { w / z_d } else { 0.0 })
        .collect();
    let index = dependency.iter().enumerate().map(|(k, (t, _))| (t.clone(), k)).collect();
    ExactDistribution {
        n,
        spanning,
        dependency,
        z_t,
        z_d,
        probs,
        index,
    }
}

/// `M[i][j] = Σ_{t ∋ i→j} p(t)`.
pub fn exact_marginals(dist: &ExactDistribution) -> MarginalTable {
    let n = dist.n;
    let mut m = Matrix::zeros(n + 1, n + 1);
    for ((tree, _), &p) in dist.dependency.iter().zip(&dist.probs) {
        for (h, d) in tree.edges() {
            m[(h, d)] += p;
        }
    }
    MarginalTable { entries: m }
}

/// Distribution of `w_avg^T / w_avg^D = (Z_T/|T|) / (Z_D/|D|)` over random graphs.
#[derive(Debug, Clone, Serialize)]
pub struct RatioSummary {
    pub n: usize,
    pub trials: usize,
    pub mean: f64,
    pub stddev: f64,
    pub ratios: Vec<f64>,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// `counts[b]` covers `[b·w, (b+1)·w)`.
    pub counts: Vec<usize>,
    /// Values at or beyond the last bin.
    pub overflow: usize,
}

impl Histogram {
    fn build(values: &[f64], bin_width: f64, bins: usize) -> Self {
        let mut counts = vec![0; bins];
        let mut overflow = 0;
        for &v in values {
            let b = (v / bin_width).floor();
            if b >= 0.0 && (b as usize) < bins {
                counts[b as usize] += 1;
            } else {
                overflow += 1;
            }
        }
        Histogram {
            bin_width,
            counts,
            overflow,
        }
    }
}

/// `|T| = (n+1)^(n-1)`.
pub fn spanning_tree_count(n: usize) -> f64 {
    ((n + 1) as f64).powi(n as i32 - 1)
}

/// `|D| = n^(n-1)`.
pub fn dependency_tree_count(n: usize) -> f64 {
    (n as f64).powi(n as i32 - 1)
}

/// Partitions of one random graph, `(Z_T, Z_D)` in log space.
fn log_partitions(g: &WeightedGraph) -> Result<(f64, f64)> {
    Ok((mtt::log_partition_spanning(g)?, mtt::log_partition_dependency(g)?))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let len = xs.len() as f64;
    let mean = pairwise_sum(xs) / len;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (len - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn check_trials(n: usize, trials: usize) -> Result<()> {
    if n == 0 || n > MAX_ENUMERATION_WORDS {
        return Err(Error::EnumerationTooLarge {
            n,
            max: MAX_ENUMERATION_WORDS,
        });
    }
    if trials == 0 {
        return Err(Error::InvalidSpec("at least one trial is needed".into()));
    }
    Ok(())
}

/// Per-graph ratios of average spanning-tree to average dependency-tree
/// weight over `trials` random graphs. Graph `t` is drawn from stream `t`
/// of `seed`. Partitions come from determinants; tree counts from Cayley.
pub fn ratio_simulation(
    n: usize,
    spec: &WeightDistributionSpec,
    trials: usize,
    seed: u64,
) -> Result<RatioSummary> {
    check_trials(n, trials)?;
    spec.check()?;
    let log_count_ratio = dependency_tree_count(n).ln() - spanning_tree_count(n).ln();
    let mut ratios = Vec::with_capacity(trials);
    for t in 0..trials {
        let g = random_graph_with(n, spec, &mut rng::split(seed, t as u64))?;
        let (log_zt, log_zd) = log_partitions(&g)?;
        ratios.push((log_zt - log_zd + log_count_ratio).exp());
    }
    let (mean, stddev) = mean_std(&ratios);
    let histogram = Histogram::build(&ratios, 0.05, 80);
    Ok(RatioSummary {
        n,
        trials,
        mean,
        stddev,
        ratios,
        histogram,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RejectionSummary {
    pub n: usize,
    pub trials: usize,
    /// Monte-Carlo `E[Z_T / Z_D]`: expected proposals per accepted sample.
    pub mean_partition_ratio: f64,
    /// `((n+1)/n)^(n-1) = |T| / |D|`.
    pub count_ratio: f64,
    /// Mean of `w_avg^T / w_avg^D` over the same graphs.
    pub mean_weight_ratio: f64,
    /// `e · E[w_avg^T / w_avg^D]`.
    pub cap: f64,
}

pub fn expected_rejection_ratio(
    n: usize,
    spec: &WeightDistributionSpec,
    trials: usize,
    seed: u64,
) -> Result<RejectionSummary> {
    let ratios = ratio_simulation(n, spec, trials, seed)?;
    let count_ratio = spanning_tree_count(n) / dependency_tree_count(n);
    let partition_ratios: Vec<f64> = ratios.ratios.iter().map(|r| r * count_ratio).collect();
    let (mean_partition_ratio, _) = mean_std(&partition_ratios);
    Ok(RejectionSummary {
        n,
        trials,
        mean_partition_ratio,
        count_ratio,
        mean_weight_ratio: ratios.mean,
        cap: std::f64::consts::E * ratios.mean,
    })
}
