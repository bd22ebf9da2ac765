//! Randomized verification battery.
//!
//! Each check compares a sampler or kernel against exhaustive enumeration or
//! a closed form and reports one line. Everything is derived from a single
//! seed; timing checks are the only source of run-to-run variation.

use std::collections::HashSet;
use std::time::Instant;

use serde::Serialize;
use treesample::colbourn::{ColbournSampler, ColbournState};
use treesample::graph::{random_graph_with, WeightDistributionSpec, WeightedGraph};
use treesample::linalg::{Lu, Matrix};
use treesample::oracle::{self, ExactDistribution};
use treesample::rng::{self, SampleRng};
use treesample::stats::{chi_square_gof, linear_fit, tvd};
use treesample::swor::{sbs_swor, trie_swor, SworOutput};
use treesample::wilson::{WilsonSampler, DEFAULT_MAX_ATTEMPTS};
use treesample::{mtt, Result, Tree};

use crate::bench::{self, Algo};

pub const TVD_MAX: f64 = 0.02;
pub const ALPHA: f64 = 0.001;
pub const EXACT_TOL: f64 = 1e-9;

/// Weight families the randomized checks rotate through.
pub fn families() -> [WeightDistributionSpec; 3] {
    [
        WeightDistributionSpec::Uniform { lo: 0.0, hi: 1.0 },
        WeightDistributionSpec::TruncatedNormal { mean: 1.0, std: 1.0 },
        WeightDistributionSpec::Exponential { rate: 1.0 },
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome {
            passed,
            detail: detail.into(),
        }
    }
}

type CheckFn = fn(u64) -> Result<Outcome>;

const CHECKS: [(&str, CheckFn); 12] = [
    ("determinants match enumeration", mtt_vs_oracle),
    ("Cayley counts", cayley),
    ("finite-difference gradient", gradient),
    ("samplers are unbiased", unbiasedness),
    ("root-weight bias reproduced", bias_reproduction),
    ("root weights proportional to marginals", proportional_root_weights),
    ("rejection attempts", rejection_attempts),
    ("rank-one inverse updates", rank_one_updates),
    ("without-replacement exactness", swor_exactness),
    ("without-replacement scaling in k", swor_scaling),
    ("long sentences", long_sentences),
    ("average weight ratio", weight_ratio),
];

pub fn len() -> usize {
    CHECKS.len()
}

/// Runs check `id` (1-based).
pub fn run_check(id: usize, seed: u64) -> CheckResult {
    let (name, check) = CHECKS[id - 1];
    let start = Instant::now();
    let outcome = check(seed).unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
    CheckResult {
        id,
        name,
        passed: outcome.passed,
        detail: outcome.detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all(seed: u64, mut on_result: impl FnMut(&CheckResult)) -> Vec<CheckResult> {
    (1..=len())
        .map(|id| {
            let r = run_check(id, seed);
            on_result(&r);
            r
        })
        .collect()
}

/// Independent stream per check and sub-task.
fn stream(seed: u64, check: u64, task: u64) -> SampleRng {
    rng::split(seed, (check << 32) | task)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub struct Fit {
    pub tvd: f64,
    pub p_value: f64,
}

impl Fit {
    pub fn ok(&self) -> bool {
        self.tvd <= TVD_MAX && self.p_value >= ALPHA
    }
}

/// Empirical fit of `samples` draws against the oracle distribution.
pub fn goodness_of_fit(
    dist: &ExactDistribution,
    samples: usize,
    mut draw: impl FnMut() -> Result<Tree>,
) -> Result<Fit> {
    let mut counts = vec![0u64; dist.probs.len()];
    let mut unmatched = 0;
    for _ in 0..samples {
        match dist.index_of(&draw()?) {
            Some(i) => counts[i] += 1,
            None => unmatched += 1,
        }
    }
    Ok(Fit {
        tvd: tvd(&counts, unmatched, &dist.probs),
        p_value: chi_square_gof(&counts, unmatched, &dist.probs).p_value,
    })
}

fn mtt_vs_oracle(seed: u64) -> Result<Outcome> {
    let start = Instant::now();
    let (mut z_err, mut m_err, mut graphs) = (0.0f64, 0.0f64, 0);
    for n in 2..=6 {
        for (f, spec) in families().iter().enumerate() {
            let mut rng = stream(seed, 1, (n * 10 + f) as u64);
            for _ in 0..100 {
                let g = random_graph_with(n, spec, &mut rng)?;
                let d = oracle::enumerate(&g)?;
                z_err = z_err
                    .max(rel_err(mtt::partition_dependency(&g)?, d.z_d))
                    .max(rel_err(mtt::partition_spanning(&g)?, d.z_t));
                m_err = m_err.max(mtt::marginals(&g)?.max_abs_diff(&oracle::exact_marginals(&d)));
                graphs += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome::new(
        z_err <= EXACT_TOL && m_err <= EXACT_TOL && secs <= 120.0,
        format!("{graphs} graphs, max Z rel err {z_err:.1e}, max marginal err {m_err:.1e}"),
    ))
}

fn cayley(_seed: u64) -> Result<Outcome> {
    let mut worst = 0.0f64;
    for n in 1..=8 {
        let g = WeightedGraph::unit_complete(n);
        worst = worst
            .max(rel_err(mtt::partition_spanning(&g)?, oracle::spanning_tree_count(n)))
            .max(rel_err(mtt::partition_dependency(&g)?, oracle::dependency_tree_count(n)));
    }
    Ok(Outcome::new(worst <= 1e-6, format!("n=1..8, max rel err {worst:.1e}")))
}

/// `∂ log Z_D / ∂ log φ(e)` by central differences equals `p(e)`.
fn gradient(seed: u64) -> Result<Outcome> {
    const H: f64 = 1e-5;
    let mut rng = stream(seed, 3, 0);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let g = random_graph_with(5, &families()[0], &mut rng)?;
        let m = mtt::marginals(&g)?;
        let rows = g.to_rows();
        for h in 0..=5 {
            for d in 1..=5 {
                if rows[h][d] == 0.0 {
                    continue;
                }
                let bump = |factor: f64| {
                    let mut r = rows.clone();
                    r[h][d] *= factor;
                    WeightedGraph::from_rows(&r).and_then(|g| mtt::log_partition_dependency(&g))
                };
                let fd = (bump(H.exp())? - bump((-H).exp())?) / (2.0 * H);
                worst = worst.max((fd - m.get(h, d)).abs());
            }
        }
    }
    Ok(Outcome::new(worst <= 1e-5, format!("10 graphs n=5, max abs err {worst:.1e}")))
}

fn unbiasedness(seed: u64) -> Result<Outcome> {
    const SAMPLES: usize = 200_000;
    let mut graphs = Vec::new();
    for i in 0..5 {
        let spec = &families()[i % 3];
        let g = random_graph_with(4, spec, &mut stream(seed, 4, i as u64))?;
        let d = oracle::enumerate(&g)?;
        graphs.push((g, d));
    }
    let mut passed = true;
    let mut parts = Vec::new();
    for algo in Algo::REPLACEMENT {
        let start = Instant::now();
        let (mut worst_tvd, mut min_p) = (0.0f64, 1.0f64);
        for (i, (g, d)) in graphs.iter().enumerate() {
            let mut rng = stream(seed, 4, 100 + i as u64);
            let fit = match algo {
                Algo::WilsonMarginal => {
                    let s = WilsonSampler::new(g).with_root_marginals()?;
                    goodness_of_fit(d, SAMPLES, || s.marginal(&mut rng).map(|r| r.tree))?
                }
                Algo::WilsonReject => {
                    let s = WilsonSampler::new(g);
                    goodness_of_fit(d, SAMPLES, || s.reject(DEFAULT_MAX_ATTEMPTS, &mut rng).map(|r| r.tree))?
                }
                _ => {
                    let s = ColbournSampler::new(g)?;
                    goodness_of_fit(d, SAMPLES, || s.sample(&mut rng).map(|(t, _)| t))?
                }
            };
            passed &= fit.ok();
            worst_tvd = worst_tvd.max(fit.tvd);
            min_p = min_p.min(fit.p_value);
        }
        let secs = start.elapsed().as_secs_f64();
        passed &= secs <= 300.0;
        parts.push(format!("{algo} tvd≤{worst_tvd:.4} p≥{min_p:.3}"));
    }
    Ok(Outcome::new(passed, format!("5 graphs n=4, 200k each: {}", parts.join(", "))))
}

fn bias_reproduction(seed: u64) -> Result<Outcome> {
    const SAMPLES: usize = 50_000;
    let g = WeightedGraph::bias_demo();
    let s = WilsonSampler::new(&g).with_root_marginals()?;
    let mut rng = stream(seed, 5, 0);
    let mut rc = 0;
    let mut marginal = 0;
    for _ in 0..SAMPLES {
        rc += usize::from(s.rc_biased(&mut rng)?.root_edge == 1);
        marginal += usize::from(s.marginal(&mut rng)?.root_edge == 1);
    }
    let (rc, marginal) = (rc as f64 / SAMPLES as f64, marginal as f64 / SAMPLES as f64);
    let exact = mtt::marginals(&g)?.get(0, 1);
    Ok(Outcome::new(
        (rc - 0.5).abs() <= 0.01 && (marginal - 2.0 / 3.0).abs() <= 0.01 && (exact - 2.0 / 3.0).abs() < 1e-12,
        format!("p(R→A): biased {rc:.4}, marginal {marginal:.4}, exact {exact:.4}"),
    ))
}

/// Symmetric word-word weights make every word's rooted subtree sum equal,
/// so ROOT weights equal to the ROOT marginals are a fixed point.
pub fn proportional_root_graph(n: usize, rng: &mut SampleRng) -> Result<WeightedGraph> {
    let base = random_graph_with(n, &families()[0], rng)?;
    let symmetric = WeightedGraph::from_fn(n, |h, d| {
        if h == 0 {
            base.weight(0, d)
        } else {
            base.weight(h.min(d), h.max(d))
        }
    })?;
    let root = mtt::marginals(&symmetric)?.root_row().to_vec();
    symmetric.with_root_weights(&root)
}

fn proportional_root_weights(seed: u64) -> Result<Outcome> {
    const SAMPLES: usize = 200_000;
    let mut rng = stream(seed, 6, 0);
    let g = proportional_root_graph(4, &mut rng)?;
    let root_weights: Vec<f64> = (1..=4).map(|j| g.weight(0, j)).collect();
    let fixed_point = mtt::marginals(&g)?
        .root_row()
        .iter()
        .zip(&root_weights)
        .map(|(m, w)| (m - w).abs())
        .fold(0.0, f64::max);
    let d = oracle::enumerate(&g)?;
    let s = WilsonSampler::new(&g);
    let fit = goodness_of_fit(&d, SAMPLES, || s.rc_biased(&mut rng).map(|r| r.tree))?;
    Ok(Outcome::new(
        fit.tvd <= TVD_MAX && fixed_point <= EXACT_TOL,
        format!(
            "n=4, |marginal − weight| {fixed_point:.1e}, tvd {:.4}, p {:.3}",
            fit.tvd, fit.p_value
        ),
    ))
}

fn rejection_attempts(seed: u64) -> Result<Outcome> {
    let mut worst = 0.0f64;
    for n in 3..=6 {
        for i in 0..2 {
            let mut rng = stream(seed, 7, (n * 10 + i) as u64);
            let g = random_graph_with(n, &families()[(n + i) % 3], &mut rng)?;
            let d = oracle::enumerate(&g)?;
            let s = WilsonSampler::new(&g);
            let samples = 20_000;
            let mut attempts = 0;
            for _ in 0..samples {
                attempts += s.reject(DEFAULT_MAX_ATTEMPTS, &mut rng)?.attempts;
            }
            worst = worst.max(rel_err(attempts as f64 / samples as f64, d.z_t / d.z_d));
        }
    }
    let mut rng = stream(seed, 7, 1000);
    let (mut attempts, mut draws) = (0, 0);
    for _ in 0..10 {
        let g = random_graph_with(10, &families()[0], &mut rng)?;
        let s = WilsonSampler::new(&g);
        for _ in 0..2_000 {
            attempts += s.reject(DEFAULT_MAX_ATTEMPTS, &mut rng)?.attempts;
            draws += 1;
        }
    }
    let mean10 = attempts as f64 / draws as f64;
    Ok(Outcome::new(
        worst <= 0.10 && mean10 < 3.5,
        format!("n=3..6 vs Z_T/Z_D max rel err {worst:.3}; uniform n=10 mean {mean10:.3}"),
    ))
}

fn fresh_inverse_transpose(l: &Matrix) -> Option<Matrix> {
    Lu::factor(l).inverse().map(|m| m.transpose())
}

fn rank_one_updates(seed: u64) -> Result<Outcome> {
    let mut rng = stream(seed, 8, 0);
    let (mut transitions, mut worst_b, mut reinversions) = (0, 0.0f64, 0);
    let mut graph_no = 0;
    while transitions < 1000 {
        let n = 2 + graph_no % 19;
        let spec = &families()[graph_no % 3];
        graph_no += 1;
        let g = random_graph_with(n, spec, &mut rng)?;
        let mut state = ColbournState::initial(&g)?;
        while !state.is_complete() && transitions < 1000 {
            let head = rng::categorical(&state.transition_probs(), &mut rng)
                .ok_or_else(|| treesample::Error::Degenerate("no admissible head".into()))?;
            state.transit_in_place(head)?;
            transitions += 1;
            if state.is_complete() {
                break;
            }
            if let Some(fresh) = fresh_inverse_transpose(&state.laplacian()) {
                worst_b = worst_b.max(fresh.max_abs_diff(state.inverse_transpose()));
            }
        }
        reinversions += state.reinversions();
    }

    let mut worst_chain = 0.0f64;
    for n in 2..=6 {
        for i in 0..2 {
            let g = random_graph_with(n, &families()[(n + i) % 3], &mut rng)?;
            let d = oracle::enumerate(&g)?;
            let s = ColbournSampler::new(&g)?;
            for (t, p) in d.support() {
                worst_chain = worst_chain.max(rel_err(s.log_prob(t)?.exp(), p));
            }
        }
    }
    Ok(Outcome::new(
        worst_b <= 1e-8 && worst_chain <= 1e-8,
        format!(
            "{transitions} transitions over {graph_no} graphs, max |B − fresh| {worst_b:.1e} ({reinversions} re-inversions); chain rule max rel err {worst_chain:.1e}"
        ),
    ))
}

/// Tree set, distinctness, and `Σ p` of one without-replacement run.
fn swor_summary(out: &SworOutput) -> (HashSet<Tree>, bool, f64) {
    let set: HashSet<Tree> = out.items.iter().map(|i| i.tree.clone()).collect();
    let distinct = set.len() == out.items.len();
    let mass = out.items.iter().map(|i| i.logprob.exp()).sum();
    (set, distinct, mass)
}

fn swor_exactness(seed: u64) -> Result<Outcome> {
    let mut rng = stream(seed, 9, 0);
    let mut failures = Vec::new();
    let mut worst_mass = 0.0f64;
    let mut graphs = 0;
    for n in 2..=4 {
        for i in 0..3 {
            let g = random_graph_with(n, &families()[i], &mut rng)?;
            let d = oracle::enumerate(&g)?;
            let support: HashSet<Tree> = d.support().map(|(t, _)| t.clone()).collect();
            for algo in Algo::SWOR {
                let out = if algo == Algo::Trie {
                    trie_swor(&g, support.len(), &mut rng)?
                } else {
                    sbs_swor(&g, support.len(), &mut rng)?
                };
                let (set, distinct, mass) = swor_summary(&out);
                worst_mass = worst_mass.max((mass - 1.0).abs());
                if !distinct || set != support || (mass - 1.0).abs() > EXACT_TOL {
                    failures.push(format!("{algo} n={n} graph {i}"));
                }
            }
            graphs += 1;
        }
    }

    for (n, ks) in [(4usize, [1usize, 5, 20, 64, 100]), (5, [1, 7, 50, 300, 625])] {
        let g = random_graph_with(n, &families()[2], &mut rng)?;
        for k in ks {
            for algo in Algo::SWOR {
                let out = if algo == Algo::Trie {
                    trie_swor(&g, k, &mut rng)?
                } else {
                    sbs_swor(&g, k, &mut rng)?
                };
                let (_, distinct, _) = swor_summary(&out);
                let support = n.pow(n as u32 - 1);
                if !distinct || out.items.len() != k.min(support) {
                    failures.push(format!("{algo} n={n} k={k}"));
                }
            }
        }
    }

    let g = random_graph_with(4, &families()[0], &mut rng)?;
    let d = oracle::enumerate(&g)?;
    let mut fits = Vec::new();
    for algo in Algo::SWOR {
        let draw = |rng: &mut SampleRng| -> Result<Tree> {
            let out = if algo == Algo::Trie {
                trie_swor(&g, 1, rng)?
            } else {
                sbs_swor(&g, 1, rng)?
            };
            Ok(out.items[0].tree.clone())
        };
        let fit = goodness_of_fit(&d, 200_000, || draw(&mut rng))?;
        if !fit.ok() {
            failures.push(format!("{algo} k=1 tvd {:.4} p {:.4}", fit.tvd, fit.p_value));
        }
        fits.push(format!("{algo} k=1 tvd {:.4} p {:.3}", fit.tvd, fit.p_value));
    }
    let detail = format!(
        "{graphs} graphs at k=support, max |Σp − 1| {worst_mass:.1e}; {}{}",
        fits.join(", "),
        if failures.is_empty() {
            String::new()
        } else {
            format!("; failed: {}", failures.join(", "))
        }
    );
    Ok(Outcome::new(failures.is_empty(), detail))
}

/// Median wall time per `k`. Reps cycle through all `k` in turn so a burst
/// of background load is spread over the curve instead of hitting one point.
pub fn scaling_curve(algo: Algo, g: &WeightedGraph, ks: &[usize], reps: usize, seed: u64) -> Result<Vec<f64>> {
    for &k in ks {
        bench::run_once(algo, g, k, &mut rng::split(seed, u64::MAX))?;
    }
    let mut times = vec![Vec::with_capacity(reps); ks.len()];
    for rep in 0..reps {
        for (slot, &k) in times.iter_mut().zip(ks) {
            let (t, _) = bench::time_once(algo, g, k, &mut rng::split(seed, rep as u64))?;
            slot.push(t.as_secs_f64());
        }
    }
    Ok(times.iter_mut().map(|t| bench::median(t)).collect())
}

fn swor_scaling(seed: u64) -> Result<Outcome> {
    let ks: Vec<usize> = (4..=10).map(|e| 1 << e).collect();
    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let mut passed = true;
    let mut parts = Vec::new();
    for n in [30, 60] {
        let g = random_graph_with(n, &families()[0], &mut stream(seed, 10, n as u64))?;
        for algo in Algo::SWOR {
            let times = scaling_curve(algo, &g, &ks, 5, seed)?;
            let fit = linear_fit(&xs, &times);
            let worst_ratio = times.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
            passed &= fit.r_squared >= 0.95 && worst_ratio <= 2.5;
            parts.push(format!(
                "{algo} n={n} R² {:.4} max doubling ratio {worst_ratio:.2} ({:.0}ms at k=1024)",
                fit.r_squared,
                times.last().copied().unwrap_or(0.0) * 1e3
            ));
        }
    }
    Ok(Outcome::new(passed, parts.join(", ")))
}

fn long_sentences(seed: u64) -> Result<Outcome> {
    const N: usize = 100;
    const K: usize = 100;
    let mut rng = stream(seed, 11, 0);
    let g = random_graph_with(N, &families()[0], &mut rng)?;
    let log_z = mtt::log_partition_dependency(&g)?;
    let mut violations = Vec::new();
    let mut worst_logprob = 0.0f64;
    let mut check_tree = |what: &str, t: &Tree, logprob: f64, violations: &mut Vec<String>| {
        if !t.is_dependency_tree() || !logprob.is_finite() || logprob > 0.0 {
            violations.push(format!("{what}: invalid tree or logprob {logprob}"));
        }
        worst_logprob = worst_logprob.max((logprob - (t.log_weight(&g) - log_z)).abs());
    };

    let s = ColbournSampler::new(&g)?;
    for _ in 0..K {
        let (t, lp) = s.sample(&mut rng)?;
        check_tree("colbourn", &t, lp, &mut violations);
    }
    for algo in Algo::SWOR {
        let out = if algo == Algo::Trie {
            trie_swor(&g, K, &mut rng)?
        } else {
            sbs_swor(&g, K, &mut rng)?
        };
        let (_, distinct, _) = swor_summary(&out);
        if !distinct || out.items.len() != K || out.truncated {
            violations.push(format!("{algo}: {} items, distinct {distinct}", out.items.len()));
        }
        if algo == Algo::Sbs {
            let scores: Vec<f64> = out.items.iter().filter_map(|i| i.gumbel_score).collect();
            if scores.len() != K || scores.windows(2).any(|w| w[0] < w[1]) || scores.iter().any(|s| !s.is_finite()) {
                violations.push("sbs: scores missing, unordered or not finite".into());
            }
        }
        for item in &out.items {
            check_tree(algo.name(), &item.tree, item.logprob, &mut violations);
        }
    }
    Ok(Outcome::new(
        violations.is_empty(),
        format!(
            "n={N} k={K}: {} violations, max |logprob − (log φ − log Z)| {worst_logprob:.1e}{}",
            violations.len(),
            violations.first().map(|v| format!(" ({v})")).unwrap_or_default()
        ),
    ))
}

fn weight_ratio(seed: u64) -> Result<Outcome> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for n in 3..=6 {
        for (f, spec) in families().iter().enumerate() {
            let s = oracle::ratio_simulation(n, spec, 10_000, seed.wrapping_add((n * 10 + f) as u64))?;
            lo = lo.min(s.mean);
            hi = hi.max(s.mean);
        }
    }
    Ok(Outcome::new(
        lo >= 0.9 && hi <= 1.1,
        format!("n=3..6 × 3 families × 10k: mean ratio in [{lo:.4}, {hi:.4}]"),
    ))
}
