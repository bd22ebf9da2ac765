//! Colbourn's ancestral sampler as an autoregressive state machine.
//!
//! Words are visited in order `1..=n`. The state holds the heads chosen so
//! far and `B`, the inverse-transpose of the single-root Laplacian of the
//! weights constrained by those heads. The unconstrained weights are shared
//! between all states of one graph. Fixing the head of word `i` changes only
//! column `i − 1` of the Laplacian, so `B` is refreshed with a
//! Sherman-Morrison rank-one update in `O(n²)`:
//!
//! ```text
//! L' = L + u e_cᵀ            u = L̂(W')[:, c] − L̂(W)[:, c]
//! B' = B − B[:, c] (uᵀ B) / (1 + uᵀ B[:, c])
//! ```
//!
//! The denominator equals the conditional probability of the chosen edge,
//! so it only vanishes for edges that should never be chosen.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::Matrix;
use crate::mtt::{self, column_rescaled, inverse_transpose, marginal_column, single_root_column_into};
use crate::rng::categorical;
use crate::tree::Tree;

/// Transition probabilities below this are treated as exact zeros.
pub const PROB_FLOOR: f64 = 1e-12;

/// Sherman-Morrison denominators below this trigger a full re-inversion.
const MIN_DENOMINATOR: f64 = 1e-10;

/// Transitions between spot checks of one row of `B Lᵀ`.
const DRIFT_CHECK_INTERVAL: usize = 8;

/// Largest tolerated deviation of the checked row from the identity.
const DRIFT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ColbournState {
    /// Unconstrained weights, each word column divided by its maximum.
    base: Arc<Matrix>,
    /// Heads chosen for words `1..position`.
    heads: Vec<usize>,
    /// `(L̂⁻¹)ᵀ` of the constrained weights.
    inverse_t: Matrix,
    since_check: usize,
    reinversions: usize,
}

impl ColbournState {
    pub fn initial(g: &WeightedGraph) -> Result<Self> {
        let (base, _) = column_rescaled(g)?;
        let inverse_t = inverse_transpose(&mtt::single_root_laplacian_of(&base))?;
        Ok(ColbournState {
            heads: Vec::with_capacity(g.n()),
            base: Arc::new(base),
            inverse_t,
            since_check: 0,
            reinversions: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.base.rows() - 1
    }

    /// Next word whose head is chosen; `n + 1` once complete.
    pub fn position(&self) -> usize {
        self.heads.len() + 1
    }

    pub fn is_complete(&self) -> bool {
        self.heads.len() == self.n()
    }

    /// Heads chosen so far, in word order.
    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    /// Constrained weight of `head → dep` (column-rescaled).
    fn weight(&self, head: usize, dep: usize) -> f64 {
        match self.heads.get(dep - 1) {
            Some(&h) if h != head => 0.0,
            _ => self.base[(head, dep)],
        }
    }

    /// Constrained (column-rescaled) weights.
    pub fn weights(&self) -> Matrix {
        let n = self.n();
        Matrix::from_fn(n + 1, n + 1, |h, d| if d == 0 { 0.0 } else { self.weight(h, d) })
    }

    pub fn inverse_transpose(&self) -> &Matrix {
        &self.inverse_t
    }

    /// `L̂` of the current weights, rebuilt on demand.
    pub fn laplacian(&self) -> Matrix {
        mtt::single_root_laplacian_of(&self.weights())
    }

    /// Full re-inversions performed along this state's history.
    pub fn reinversions(&self) -> usize {
        self.reinversions
    }

    /// `max |B Lᵀ − I|`, computed in `O(n³)`.
    pub fn inverse_residual(&self) -> f64 {
        let prod = self.inverse_t.matmul(&self.laplacian().transpose());
        prod.max_abs_diff(&Matrix::identity(self.n()))
    }

    /// Distribution over heads `0..=n` of the current word, conditioned on
    /// the heads already chosen.
    pub fn transition_probs(&self) -> Vec<f64> {
        assert!(!self.is_complete(), "no word left to attach");
        let mut probs = marginal_column(&self.base, &self.inverse_t, self.position());
        for p in probs.iter_mut() {
            if *p < PROB_FLOOR {
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        if total > 0.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
        probs
    }

    /// New state with `head → position` fixed.
    pub fn transit(&self, head: usize) -> Result<Self> {
        let mut next = self.clone();
        next.transit_in_place(head)?;
        Ok(next)
    }

    /// Fixes the head of the current word. The last word only records its
    /// head: `B` is not needed once every word is attached.
    pub fn transit_in_place(&mut self, head: usize) -> Result<()> {
        let n = self.n();
        let dep = self.position();
        assert!(dep <= n, "no word left to attach");
        if head > n || head == dep || self.base[(head, dep)] <= 0.0 {
            return Err(Error::Degenerate(format!(
                "edge {head} → {dep} has zero weight in the current state"
            )));
        }
        self.heads.push(head);
        if dep == n {
            return Ok(());
        }
        let c = dep - 1;

        let base = &self.base;
        let mut u = vec![0.0; n];
        single_root_column_into(n, c, |h| base[(h, dep)], |a, v| u[a] = -v);
        let kept = |h: usize| if h == head { base[(h, dep)] } else { 0.0 };
        single_root_column_into(n, c, kept, |a, v| u[a] += v);

        let b = &self.inverse_t;
        let denominator = 1.0 + (0..n).map(|a| u[a] * b[(a, c)]).sum::<f64>();

        self.since_check += 1;

        if denominator.abs() < MIN_DENOMINATOR {
            return self.reinvert();
        }

        // v = uᵀ B
        let mut v = vec![0.0; n];
        for (a, &ua) in u.iter().enumerate() {
            if ua == 0.0 {
                continue;
            }
            for (vb, &bab) in v.iter_mut().zip(b.row(a)) {
                *vb += ua * bab;
            }
        }
        let b = &mut self.inverse_t;
        for a in 0..n {
            let scale = b[(a, c)] / denominator;
            if scale == 0.0 {
                continue;
            }
            for (bab, &vb) in b.row_mut(a).iter_mut().zip(&v) {
                *bab -= scale * vb;
            }
        }

        if self.since_check >= DRIFT_CHECK_INTERVAL {
            self.since_check = 0;
            if self.row_residual(c) > DRIFT_TOLERANCE {
                return self.reinvert();
            }
        }
        Ok(())
    }

    /// `max_s |(B Lᵀ)[r][s] − δ_rs|` for one row `r`.
    fn row_residual(&self, r: usize) -> f64 {
        let l = self.laplacian();
        let b_row = self.inverse_t.row(r);
        (0..self.n())
            .map(|s| {
                let dot: f64 = b_row.iter().zip(l.row(s)).map(|(x, y)| x * y).sum();
                (dot - if r == s { 1.0 } else { 0.0 }).abs()
            })
            .fold(0.0, f64::max)
    }

    fn reinvert(&mut self) -> Result<()> {
        self.inverse_t = inverse_transpose(&self.laplacian())?;
        self.since_check = 0;
        self.reinversions += 1;
        Ok(())
    }
}

pub fn initial_state(g: &WeightedGraph) -> Result<ColbournState> {
    ColbournState::initial(g)
}

pub fn transition_probs(s: &ColbournState) -> Vec<f64> {
    s.transition_probs()
}

pub fn transit_state(s: &ColbournState, head: usize) -> Result<ColbournState> {
    s.transit(head)
}

/// Runs the state machine from `state` to completion, choosing each head
/// with `choose`. Returns the head array and `Σ log p(chosen)`.
fn unroll(
    mut state: ColbournState,
    mut choose: impl FnMut(&[f64]) -> Option<usize>,
) -> Result<(Vec<usize>, f64)> {
    let mut logprob = 0.0;
    while !state.is_complete() {
        let probs = state.transition_probs();
        let head = choose(&probs)
            .ok_or_else(|| Error::Degenerate(format!("no head available for word {}", state.position())))?;
        logprob += probs[head].ln();
        state.transit_in_place(head)?;
    }
    Ok((state.heads, logprob))
}

/// Repeated exact sampling from one graph; the `O(n³)` inversion is shared.
#[derive(Debug, Clone)]
pub struct ColbournSampler {
    initial: ColbournState,
}

impl ColbournSampler {
    pub fn new(g: &WeightedGraph) -> Result<Self> {
        Ok(ColbournSampler {
            initial: ColbournState::initial(g)?,
        })
    }

    pub fn initial_state(&self) -> &ColbournState {
        &self.initial
    }

    /// One tree and its exact log-probability.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Tree, f64)> {
        let (heads, logprob) = unroll(self.initial.clone(), |p| categorical(p, rng))?;
        Ok((Tree::from_heads_unchecked(heads), logprob))
    }

    /// `log p(t)` as the sum of conditional log-probabilities of its heads.
    pub fn log_prob(&self, tree: &Tree) -> Result<f64> {
        let mut it = tree.heads().iter();
        let (_, logprob) = unroll(self.initial.clone(), |p| {
            it.next().copied().filter(|&h| h < p.len() && p[h] > 0.0)
        })?;
        Ok(logprob)
    }
}

/// Exact sample from `p(t) = φ(t) / Z_D`.
pub fn colbourn_sample<R: Rng + ?Sized>(g: &WeightedGraph, rng: &mut R) -> Result<Tree> {
    ColbournSampler::new(g)?.sample(rng).map(|(t, _)| t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{random_graph, WeightDistributionSpec};
    use crate::oracle;
    use crate::rng::seeded;
    use crate::stats::tvd;

    const UNIFORM: WeightDistributionSpec = WeightDistributionSpec::Uniform { lo: 0.0, hi: 1.0 };

    #[test]
    fn bias_demo_first_word() {
        let s = initial_state(&WeightedGraph::bias_demo()).unwrap();
        let p = transition_probs(&s);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[2] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(p[3], 0.0);
        assert!(s.inverse_residual() < 1e-10);
    }

    #[test]
    fn bias_demo_after_root_edge() {
        let s = initial_state(&WeightedGraph::bias_demo()).unwrap();
        let s = transit_state(&s, 0).unwrap();
        let p = transition_probs(&s);
        assert!((p[1] - 0.5).abs() < 1e-12);
        assert!((p[3] - 0.5).abs() < 1e-12);
        assert_eq!(p[0] + p[2], 0.0);
    }

    #[test]
    fn forced_chain_has_probability_one_third() {
        let sampler = ColbournSampler::new(&WeightedGraph::bias_demo()).unwrap();
        let lp = sampler.log_prob(&Tree::new(vec![0, 1, 1]).unwrap()).unwrap();
        assert!((lp.exp() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_word() {
        let g = WeightedGraph::from_fn(1, |_, _| 0.4).unwrap();
        let s = initial_state(&g).unwrap();
        assert_eq!(transition_probs(&s), vec![1.0, 0.0]);
        assert_eq!(colbourn_sample(&g, &mut seeded(1)).unwrap().heads(), &[0]);
    }

    #[test]
    fn first_transition_is_a_marginal_column() {
        let g = random_graph(6, &UNIFORM, 9).unwrap();
        let m = mtt::marginals(&g).unwrap();
        let p = transition_probs(&initial_state(&g).unwrap());
        for (h, &ph) in p.iter().enumerate() {
            assert!((ph - m.get(h, 1)).abs() < 1e-12);
        }
    }

    #[test]
    fn sure_heads_leave_later_words_unchanged() {
        // word 1 can only attach to ROOT
        let g = WeightedGraph::from_fn(4, |i, j| match (i, j) {
            (0, 1) => 1.3,
            (_, 1) => 0.0,
            _ => 0.2 + 0.1 * (i + 2 * j) as f64,
        })
        .unwrap();
        let s0 = initial_state(&g).unwrap();
        assert_eq!(transition_probs(&s0)[0], 1.0);
        let s1 = transit_state(&s0, 0).unwrap();
        let fresh = mtt::marginals(&g).unwrap();
        for (h, &p) in transition_probs(&s1).iter().enumerate() {
            assert!((p - fresh.get(h, 2)).abs() < 1e-12);
        }
    }

    #[test]
    fn update_matches_fresh_inverse() {
        let mut rng = seeded(5);
        for seed in 0..20 {
            let g = random_graph(12, &UNIFORM, seed).unwrap();
            let mut s = initial_state(&g).unwrap();
            while s.position() < s.n() {
                let head = categorical(&s.transition_probs(), &mut rng).unwrap();
                s = s.transit(head).unwrap();
                let fresh = inverse_transpose(&s.laplacian()).unwrap();
                assert!(s.inverse_transpose().max_abs_diff(&fresh) < 1e-8);
            }
        }
    }

    #[test]
    fn zero_weight_head_is_refused() {
        let s = initial_state(&WeightedGraph::bias_demo()).unwrap();
        assert!(transit_state(&s, 3).is_err());
    }

    #[test]
    fn chain_rule_matches_oracle() {
        for seed in 0..5 {
            let g = random_graph(4, &UNIFORM, 100 + seed).unwrap();
            let exact = oracle::enumerate(&g).unwrap();
            let sampler = ColbournSampler::new(&g).unwrap();
            for ((tree, _), &p) in exact.dependency.iter().zip(&exact.probs) {
                let lp = sampler.log_prob(tree).unwrap();
                assert!((lp.exp() - p).abs() <= 1e-8 * p, "{tree:?}");
            }
        }
    }

    #[test]
    fn samples_match_oracle() {
        let g = random_graph(4, &UNIFORM, 77).unwrap();
        let exact = oracle::enumerate(&g).unwrap();
        let sampler = ColbournSampler::new(&g).unwrap();
        let mut rng = seeded(6);
        let mut counts = vec![0u64; exact.dependency.len()];
        for _ in 0..200_000 {
            let (t, _) = sampler.sample(&mut rng).unwrap();
            counts[exact.index_of(&t).unwrap()] += 1;
        }
        let d = tvd(&counts, 0, &exact.probs);
        assert!(d <= 0.02, "tvd {d}");
    }
}
