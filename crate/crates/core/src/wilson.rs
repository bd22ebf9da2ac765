//! Wilson's loop-erased random-walk sampler and its single-root variants.
//!
//! The walk moves against edge direction: standing at word `u` it picks a
//! head `v` with probability `φ(v → u) / Σ φ(· → u)`. A walk continues until
//! it hits the growing tree; cycles are erased implicitly because revisiting
//! a node overwrites its parent pointer.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::mtt;
use crate::rng::categorical;
use crate::tree::Tree;

/// Default proposal budget of [`wilson_reject`].
pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

/// One sampled dependency tree plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerReport {
    pub tree: Tree,
    /// Spanning-tree proposals drawn; 1 for the non-rejecting samplers.
    pub attempts: usize,
    /// Word attached to ROOT.
    pub root_edge: usize,
}

/// Per-word cumulative incoming weights for the head-selection walk.
#[derive(Debug, Clone)]
struct HeadTable {
    heads: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
}

impl HeadTable {
    fn new(g: &WeightedGraph, with_root: bool) -> Self {
        let n = g.n();
        let first = if with_root { 0 } else { 1 };
        let mut heads = vec![Vec::new(); n + 1];
        let mut cumulative = vec![Vec::new(); n + 1];
        for dep in 1..=n {
            let mut acc = 0.0;
            for h in first..=n {
                let w = g.weight(h, dep);
                if w > 0.0 {
                    acc += w;
                    heads[dep].push(h);
                    cumulative[dep].push(acc);
                }
            }
        }
        HeadTable { heads, cumulative }
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, dep: usize, rng: &mut R) -> Result<usize> {
        let cum = &self.cumulative[dep];
        let total = *cum.last().ok_or(Error::StuckWalk { node: dep })?;
        let u = rng.gen::<f64>() * total;
        let k = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        Ok(self.heads[dep][k])
    }

    /// Errors unless every word is reachable from `root` along edges in the table.
    fn check_reachable(&self, root: usize) -> Result<()> {
        let n = self.heads.len() - 1;
        // out-adjacency from the in-adjacency lists
        let mut children = vec![Vec::new(); n + 1];
        for dep in 1..=n {
            for &h in &self.heads[dep] {
                children[h].push(dep);
            }
        }
        let mut seen = vec![false; n + 1];
        seen[root] = true;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &c in &children[v] {
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        match (1..=n).find(|&v| !seen[v]) {
            Some(node) if self.heads[node].is_empty() => Err(Error::StuckWalk { node }),
            Some(node) => Err(Error::Unreachable { root, node }),
            None => Ok(()),
        }
    }

    /// Loop-erased walk from every word into the tree seeded at `root`.
    ///
    /// `root == 0` grows a spanning tree of the full graph. For a word
    /// `root`, the table must exclude ROOT edges and the result attaches
    /// `root` to ROOT. Assumes [`check_reachable`](Self::check_reachable).
    fn walk<R: Rng + ?Sized>(&self, root: usize, rng: &mut R) -> Result<Vec<usize>> {
        let n = self.heads.len() - 1;
        let mut in_tree = vec![false; n + 1];
        let mut next = vec![0usize; n + 1];
        in_tree[0] = true;
        in_tree[root] = true;
        for start in 1..=n {
            let mut u = start;
            while !in_tree[u] {
                next[u] = self.draw(u, rng)?;
                u = next[u];
            }
            let mut u = start;
            while !in_tree[u] {
                in_tree[u] = true;
                u = next[u];
            }
        }
        Ok((1..=n).map(|w| if w == root { 0 } else { next[w] }).collect())
    }
}

/// Reusable sampler over one graph; tables are built once.
#[derive(Debug, Clone)]
pub struct WilsonSampler<'g> {
    graph: &'g WeightedGraph,
    full: HeadTable,
    words_only: HeadTable,
    root_marginals: Option<Vec<f64>>,
}

impl<'g> WilsonSampler<'g> {
    pub fn new(graph: &'g WeightedGraph) -> Self {
        WilsonSampler {
            graph,
            full: HeadTable::new(graph, true),
            words_only: HeadTable::new(graph, false),
            root_marginals: None,
        }
    }

    pub fn graph(&self) -> &WeightedGraph {
        self.graph
    }

    /// Computes and caches `p(0 → j)` for [`marginal`](Self::marginal).
    pub fn with_root_marginals(mut self) -> Result<Self> {
        let m = mtt::marginals(self.graph)?;
        self.root_marginals = Some(m.root_row().to_vec());
        Ok(self)
    }

    /// Uses externally computed ROOT-edge marginals (`n` entries, word order).
    pub fn with_cached_root_marginals(mut self, root_marginals: Vec<f64>) -> Result<Self> {
        if root_marginals.len() != self.graph.n() {
            return Err(Error::Dimension(format!(
                "expected {} ROOT marginals, got {}",
                self.graph.n(),
                root_marginals.len()
            )));
        }
        self.root_marginals = Some(root_marginals);
        Ok(self)
    }

    pub fn root_marginals(&self) -> Option<&[f64]> {
        self.root_marginals.as_deref()
    }

    /// Unconstrained spanning tree rooted at ROOT, `∝ φ(t)` over all of `T`.
    pub fn spanning<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Tree> {
        self.full.check_reachable(0)?;
        self.full.walk(0, rng).map(Tree::from_heads_unchecked)
    }

    /// ROOT edge `0 → word` followed by Wilson on the graph without ROOT
    /// edges, rooted at `word`.
    fn rooted_at<R: Rng + ?Sized>(&self, word: usize, rng: &mut R) -> Result<Tree> {
        self.words_only.walk(word, rng).map(Tree::from_heads_unchecked)
    }

    /// Root edge by raw weight. Biased unless ROOT weights happen to be
    /// proportional to the ROOT marginals.
    pub fn rc_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SamplerReport> {
        let n = self.graph.n();
        let root_weights: Vec<f64> = (1..=n).map(|j| self.graph.weight(0, j)).collect();
        let word = categorical(&root_weights, rng).ok_or(Error::NoRootEdges)? + 1;
        self.words_only.check_reachable(word)?;
        Ok(SamplerReport {
            tree: self.rooted_at(word, rng)?,
            attempts: 1,
            root_edge: word,
        })
    }

    /// Root edge by its marginal, then Wilson rooted at that word.
    pub fn marginal<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SamplerReport> {
        let marginals = self
            .root_marginals
            .as_deref()
            .expect("call with_root_marginals first");
        let word = categorical(marginals, rng)
            .ok_or_else(|| Error::Degenerate("all ROOT marginals are zero".into()))?
            + 1;
        Ok(SamplerReport {
            tree: self.rooted_at(word, rng)?,
            attempts: 1,
            root_edge: word,
        })
    }

    /// Spanning-tree proposals until one has exactly one ROOT edge.
    pub fn reject<R: Rng + ?Sized>(&self, max_attempts: usize, rng: &mut R) -> Result<SamplerReport> {
        self.full.check_reachable(0)?;
        for attempt in 1..=max_attempts {
            let heads = self.full.walk(0, rng)?;
            let mut roots = heads.iter().enumerate().filter(|(_, &h)| h == 0);
            if let (Some((k, _)), None) = (roots.next(), roots.next()) {
                return Ok(SamplerReport {
                    tree: Tree::from_heads_unchecked(heads),
                    attempts: attempt,
                    root_edge: k + 1,
                });
            }
        }
        Err(Error::RejectionBudget {
            attempts: max_attempts,
        })
    }
}

/// Spanning tree `∝ φ(t)`, edges directed away from `root`.
///
/// `root == 0` samples over all spanning trees of `g`. A word `root` samples
/// over the graph with every ROOT edge deleted, rooted at that word; the
/// returned head array attaches `root` to ROOT.
pub fn wilson_spanning<R: Rng + ?Sized>(g: &WeightedGraph, root: usize, rng: &mut R) -> Result<Tree> {
    if root > g.n() {
        return Err(Error::Dimension(format!("root {root} out of range 0..={}", g.n())));
    }
    let sampler = WilsonSampler::new(g);
    if root == 0 {
        sampler.spanning(rng)
    } else {
        sampler.words_only.check_reachable(root)?;
        sampler.rooted_at(root, rng)
    }
}

/// Root-constrained Wilson with the ROOT edge drawn by raw weight.
///
/// **Biased**: kept to reproduce the counterexample, never a default.
pub fn wilson_rc<R: Rng + ?Sized>(g: &WeightedGraph, rng: &mut R) -> Result<SamplerReport> {
    WilsonSampler::new(g).rc_biased(rng)
}

/// Unbiased: ROOT edge from the exact marginals, remainder by Wilson.
///
/// Pass `cached_root_marginals` when drawing many samples from one graph.
pub fn wilson_marginal<R: Rng + ?Sized>(
    g: &WeightedGraph,
    rng: &mut R,
    cached_root_marginals: Option<&[f64]>,
) -> Result<SamplerReport> {
    let sampler = WilsonSampler::new(g);
    let sampler = match cached_root_marginals {
        Some(m) => sampler.with_cached_root_marginals(m.to_vec())?,
        None => sampler.with_root_marginals()?,
    };
    sampler.marginal(rng)
}

/// Unbiased: rejection sampling with spanning trees as the proposal.
pub fn wilson_reject<R: Rng + ?Sized>(
    g: &WeightedGraph,
    rng: &mut R,
    max_attempts: usize,
) -> Result<SamplerReport> {
    WilsonSampler::new(g).reject(max_attempts, rng)
}
