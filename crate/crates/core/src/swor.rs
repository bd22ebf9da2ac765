//! Sampling dependency trees without replacement.
//!
//! Both samplers treat the tree distribution as a sequence model over head
//! choices, using the Colbourn state machine for the conditionals, and cost
//! `O(k n³)` for `k` trees.
//!
//! * [`trie_swor`] draws trees one at a time. A trie over the sampled head
//!   prefixes records how much probability mass has already been taken below
//!   each prefix, and every descent samples from the remaining mass only.
//! * [`sbs_swor`] is stochastic beam search: Gumbel-top-k over sequences,
//!   expanding `k` prefixes in lockstep with max-truncated Gumbel noise.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gumbel};

use crate::colbourn::ColbournState;
use crate::error::Result;
use crate::graph::WeightedGraph;
use crate::linalg::{log1m_exp, log_add_exp};
use crate::rng::categorical;
use crate::tree::Tree;

/// Remaining root mass at or below which the support counts as exhausted.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SworItem {
    pub tree: Tree,
    /// Unrestricted `log p(t)`.
    pub logprob: f64,
    /// Perturbed score (stochastic beam search only).
    pub gumbel_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SworOutput {
    pub items: Vec<SworItem>,
    /// Fewer than `k` trees had positive probability.
    pub truncated: bool,
}

#[derive(Debug, Clone)]
struct TrieNode {
    children: BTreeMap<usize, usize>,
    parent: Option<usize>,
    /// `log P(prefix)`.
    log_prob: f64,
    /// Log of the probability of completed samples below this node.
    log_taken: f64,
    /// Heads with positive conditional probability; `None` until visited.
    support: Option<usize>,
    exhausted_children: usize,
    exhausted: bool,
}

impl TrieNode {
    fn new(parent: Option<usize>, log_prob: f64) -> Self {
        TrieNode {
            children: BTreeMap::new(),
            parent,
            log_prob,
            log_taken: f64::NEG_INFINITY,
            support: None,
            exhausted_children: 0,
            exhausted: false,
        }
    }

    /// Fraction of this node's mass not yet sampled.
    fn remaining_fraction(&self) -> f64 {
        if self.exhausted {
            0.0
        } else {
            (-(self.log_taken - self.log_prob).exp_m1()).max(0.0)
        }
    }
}

/// Incremental sampler: each call to [`next`](Self::next) returns a tree not
/// returned before, drawn from the renormalized remaining distribution.
///
/// One session holds mutable state and must not be shared across threads.
#[derive(Debug, Clone)]
pub struct TrieSampler {
    initial: ColbournState,
    nodes: Vec<TrieNode>,
}

impl TrieSampler {
    pub fn new(g: &WeightedGraph) -> Result<Self> {
        Ok(TrieSampler {
            initial: ColbournState::initial(g)?,
            nodes: vec![TrieNode::new(None, 0.0)],
        })
    }

    /// Probability mass not yet sampled.
    pub fn residual_mass(&self) -> f64 {
        self.nodes[0].remaining_fraction()
    }

    /// Number of trie nodes (`O(k n)` after `k` draws).
    pub fn trie_size(&self) -> usize {
        self.nodes.len()
    }

    /// Next tree, or `None` once every positive-probability tree was drawn.
    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<SworItem>> {
        loop {
            if self.nodes[0].exhausted || self.residual_mass() <= RESIDUAL_FLOOR {
                return Ok(None);
            }
            if let Some(item) = self.descend(rng)? {
                return Ok(Some(item));
            }
        }
    }

    /// One root-to-leaf descent. Returns `None` if it ran into a prefix whose
    /// remaining mass was numerically zero; that prefix is then closed.
    fn descend<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<SworItem>> {
        let n = self.initial.n();
        let mut state = self.initial.clone();
        let mut node = 0;
        for _ in 0..n {
            let probs = state.transition_probs();
            let support = probs.iter().filter(|&&p| p > 0.0).count();
            self.nodes[node].support.get_or_insert(support);

            let remaining: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(h, &p)| match self.nodes[node].children.get(&h) {
                    _ if p <= 0.0 => 0.0,
                    None => p,
                    Some(&c) => p * self.nodes[c].remaining_fraction(),
                })
                .collect();
            let Some(head) = categorical(&remaining, rng) else {
                self.close(node);
                return Ok(None);
            };

            let child = match self.nodes[node].children.get(&head) {
                Some(&c) => c,
                None => {
                    let log_prob = self.nodes[node].log_prob + probs[head].ln();
                    self.nodes.push(TrieNode::new(Some(node), log_prob));
                    let c = self.nodes.len() - 1;
                    self.nodes[node].children.insert(head, c);
                    c
                }
            };
            state.transit_in_place(head)?;
            node = child;
        }

        let log_prob = self.nodes[node].log_prob;
        self.nodes[node].support = Some(0);
        self.close(node);
        Ok(Some(SworItem {
            tree: Tree::from_heads_unchecked(state.heads().to_vec()),
            logprob: log_prob,
            gumbel_score: None,
        }))
    }

    /// Marks `node` fully sampled and pushes its untaken mass and exhaustion
    /// up to the root.
    fn close(&mut self, node: usize) {
        // mass newly taken at this node
        let fresh = {
            let n = &self.nodes[node];
            n.log_prob + log1m_exp((n.log_taken - n.log_prob).min(0.0))
        };
        self.nodes[node].log_taken = self.nodes[node].log_prob;
        self.nodes[node].exhausted = true;

        let mut child = node;
        let mut propagate_exhaustion = true;
        while let Some(parent) = self.nodes[child].parent {
            let p = &mut self.nodes[parent];
            if fresh.is_finite() {
                p.log_taken = log_add_exp(p.log_taken, fresh);
            }
            if propagate_exhaustion {
                p.exhausted_children += 1;
                if p.support.is_some_and(|s| p.exhausted_children >= s) {
                    p.exhausted = true;
                    p.log_taken = p.log_prob;
                } else {
                    propagate_exhaustion = false;
                }
            }
            child = parent;
        }
    }
}

/// Draws up to `k` distinct trees; the `i`-th is an exact sample from the
/// distribution with the first `i − 1` removed and renormalized.
pub fn trie_swor<R: Rng + ?Sized>(g: &WeightedGraph, k: usize, rng: &mut R) -> Result<SworOutput> {
    let mut sampler = TrieSampler::new(g)?;
    let mut items = Vec::with_capacity(k);
    while items.len() < k {
        match sampler.next(rng)? {
            Some(item) => items.push(item),
            None => break,
        }
    }
    let truncated = items.len() < k;
    Ok(SworOutput { items, truncated })
}

/// One prefix on the beam.
#[derive(Debug, Clone)]
pub struct BeamItem {
    pub state: ColbournState,
    /// `log P(prefix)`.
    pub logprob: f64,
    /// Max-truncated Gumbel score of the prefix.
    pub gumbel: f64,
}

/// Score of a child whose raw perturbed log-probability is `g`, given the
/// parent score `parent` and the children's maximum raw score `max`:
/// `−log(exp(−parent) − exp(−max) + exp(−g))`, evaluated stably.
fn truncated_gumbel(parent: f64, max: f64, g: f64) -> f64 {
    let v = parent - g + log1m_exp(g - max);
    if v == f64::NEG_INFINITY {
        return parent;
    }
    parent - v.max(0.0) - (-v.abs()).exp().ln_1p()
}

struct Candidate {
    score: f64,
    logprob: f64,
    parent: usize,
    head: usize,
}

/// Stochastic beam search: the `k` trees with the largest Gumbel-perturbed
/// log-probabilities, ordered by descending score.
pub fn sbs_swor<R: Rng + ?Sized>(g: &WeightedGraph, k: usize, rng: &mut R) -> Result<SworOutput> {
    let initial = ColbournState::initial(g)?;
    let n = initial.n();
    let gumbel = Gumbel::new(0.0, 1.0).expect("standard Gumbel");
    if k == 0 {
        return Ok(SworOutput {
            items: Vec::new(),
            truncated: false,
        });
    }

    let mut beam = vec![BeamItem {
        state: initial,
        logprob: 0.0,
        gumbel: gumbel.sample(rng),
    }];

    for _ in 0..n {
        let mut candidates = Vec::new();
        for (b, item) in beam.iter().enumerate() {
            let probs = item.state.transition_probs();
            let first = candidates.len();
            let mut max = f64::NEG_INFINITY;
            for (head, &p) in probs.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let logprob = item.logprob + p.ln();
                let raw = logprob + gumbel.sample(rng);
                max = max.max(raw);
                candidates.push(Candidate {
                    score: raw,
                    logprob,
                    parent: b,
                    head,
                });
            }
            for c in &mut candidates[first..] {
                c.score = truncated_gumbel(item.gumbel, max, c.score);
            }
        }

        let by_score = |a: &Candidate, b: &Candidate| {
            b.score.total_cmp(&a.score).then_with(|| {
                let pa = beam[a.parent].state.heads();
                let pb = beam[b.parent].state.heads();
                pa.cmp(pb).then(a.head.cmp(&b.head))
            })
        };
        if candidates.len() > k {
            candidates.select_nth_unstable_by(k - 1, by_score);
            candidates.truncate(k);
        }
        candidates.sort_by(by_score);

        // The last surviving child of a prefix takes over its state.
        let mut pending = vec![0usize; beam.len()];
        for c in &candidates {
            pending[c.parent] += 1;
        }
        let mut parents: Vec<Option<ColbournState>> = beam.into_iter().map(|b| Some(b.state)).collect();
        beam = Vec::with_capacity(candidates.len());
        for c in candidates {
            pending[c.parent] -= 1;
            let slot = &mut parents[c.parent];
            let mut state = if pending[c.parent] == 0 {
                slot.take().expect("state still owned")
            } else {
                slot.clone().expect("state still owned")
            };
            state.transit_in_place(c.head)?;
            beam.push(BeamItem {
                state,
                logprob: c.logprob,
                gumbel: c.score,
            });
        }
    }

    let truncated = beam.len() < k;
    let items = beam
        .into_iter()
        .map(|b| SworItem {
            tree: Tree::from_heads_unchecked(b.state.heads().to_vec()),
            logprob: b.logprob,
            gumbel_score: Some(b.gumbel),
        })
        .collect();
    Ok(SworOutput { items, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{random_graph, WeightDistributionSpec};
    use crate::oracle;
    use crate::rng::seeded;
    use std::collections::HashSet;

    #[test]
    fn truncated_gumbel_properties() {
        // the child holding the maximum takes the parent score exactly
        assert_eq!(truncated_gumbel(1.5, 3.0, 3.0), 1.5);
        // others stay below it and keep their order
        let a = truncated_gumbel(1.5, 3.0, 2.0);
        let b = truncated_gumbel(1.5, 3.0, 0.5);
        assert!(b < a && a < 1.5);
        let direct = -((-1.5f64).exp() - (-3.0f64).exp() + (-2.0f64).exp()).ln();
        assert!((a - direct).abs() < 1e-12);
    }

    #[test]
    fn trie_exhausts_bias_demo() {
        let g = WeightedGraph::bias_demo();
        let out = trie_swor(&g, 3, &mut seeded(1)).unwrap();
        assert!(!out.truncated);
        assert_eq!(out.items.len(), 3);
        let total: f64 = out.items.iter().map(|i| i.logprob.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        for item in &out.items {
            assert!((item.logprob - (1.0f64 / 3.0).ln()).abs() < 1e-9);
        }
        let more = trie_swor(&g, 5, &mut seeded(1)).unwrap();
        assert!(more.truncated);
        assert_eq!(more.items.len(), 3);
    }

    #[test]
    fn sbs_and_trie_agree_on_full_support() {
        let g = WeightedGraph::bias_demo();
        let trie = trie_swor(&g, 3, &mut seeded(2)).unwrap();
        let sbs = sbs_swor(&g, 3, &mut seeded(2)).unwrap();
        let set = |o: &SworOutput| {
            let mut v: Vec<(Vec<usize>, f64)> = o.items.iter().map(|i| (i.tree.heads().to_vec(), i.logprob)).collect();
            v.sort_by(|a, b| a.0.cmp(&b.0));
            v
        };
        for ((ta, la), (tb, lb)) in set(&trie).iter().zip(&set(&sbs)) {
            assert_eq!(ta, tb);
            assert!((la - lb).abs() < 1e-9);
        }
        let scores: Vec<f64> = sbs.items.iter().map(|i| i.gumbel_score.unwrap()).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn unit_graph_full_support() {
        let g = WeightedGraph::unit_complete(3);
        for out in [trie_swor(&g, 9, &mut seeded(3)).unwrap(), sbs_swor(&g, 9, &mut seeded(3)).unwrap()] {
            assert_eq!(out.items.len(), 9);
            assert!(!out.truncated);
            let distinct: HashSet<&Tree> = out.items.iter().map(|i| &i.tree).collect();
            assert_eq!(distinct.len(), 9);
            for i in &out.items {
                assert!(i.tree.is_dependency_tree());
                assert!((i.logprob - (1.0f64 / 9.0).ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn logprobs_match_oracle_and_trees_are_distinct() {
        let spec = WeightDistributionSpec::Exponential { rate: 1.0 };
        for seed in 0..5 {
            let g = random_graph(4, &spec, seed).unwrap();
            let exact = oracle::enumerate(&g).unwrap();
            for k in [1, 7, 30, 64] {
                for out in [trie_swor(&g, k, &mut seeded(seed)).unwrap(), sbs_swor(&g, k, &mut seeded(seed)).unwrap()] {
                    assert_eq!(out.items.len(), k);
                    let distinct: HashSet<&Tree> = out.items.iter().map(|i| &i.tree).collect();
                    assert_eq!(distinct.len(), k);
                    for item in &out.items {
                        let p = exact.prob(&item.tree);
                        assert!((item.logprob - p.ln()).abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn trie_residual_mass_tracks_draws() {
        let g = random_graph(4, &WeightDistributionSpec::Uniform { lo: 0.0, hi: 1.0 }, 8).unwrap();
        let mut sampler = TrieSampler::new(&g).unwrap();
        let mut rng = seeded(4);
        let mut taken = 0.0;
        for _ in 0..20 {
            let item = sampler.next(&mut rng).unwrap().unwrap();
            taken += item.logprob.exp();
            assert!((sampler.residual_mass() - (1.0 - taken)).abs() < 1e-9);
        }
        assert!(sampler.trie_size() <= 1 + 20 * 4);
    }

    #[test]
    fn k_zero_is_empty() {
        let g = WeightedGraph::unit_complete(2);
        assert!(sbs_swor(&g, 0, &mut seeded(0)).unwrap().items.is_empty());
        assert!(trie_swor(&g, 0, &mut seeded(0)).unwrap().items.is_empty());
    }
}
