//! Determinant kernel, autoregressive state and without-replacement samplers
//! against enumeration and closed forms.

use treesample::colbourn::{initial_state, transition_probs, transit_state};
use treesample::graph::{random_graph, read_graph, write_graph, WeightDistributionSpec, WeightedGraph};
use treesample::linalg::Matrix;
use treesample::oracle::{self, expected_rejection_ratio, ratio_simulation};
use treesample::swor::{sbs_swor, trie_swor};
use treesample::{mtt, rng};

const UNIFORM: WeightDistributionSpec = WeightDistributionSpec::Uniform { lo: 0.0, hi: 1.0 };

#[test]
fn marginals_relative_to_enumeration() {
    for seed in 0..20 {
        let g = random_graph(5, &UNIFORM, seed).unwrap();
        let exact = oracle::exact_marginals(&oracle::enumerate(&g).unwrap());
        let m = mtt::marginals(&g).unwrap();
        for h in 0..=5 {
            for d in 1..=5 {
                let (a, b) = (m.get(h, d), exact.get(h, d));
                if b == 0.0 {
                    assert_eq!(a, 0.0, "({h},{d})");
                } else {
                    assert!((a - b).abs() <= 1e-9 * b, "({h},{d}): {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn tree_weights_agree_with_enumeration() {
    let g = random_graph(4, &WeightDistributionSpec::Exponential { rate: 2.0 }, 8).unwrap();
    let d = oracle::enumerate(&g).unwrap();
    for (t, w) in &d.spanning {
        assert!((t.weight(&g) - w).abs() <= 1e-12 * w);
    }
    let unit = oracle::enumerate(&WeightedGraph::unit_complete(4)).unwrap();
    assert_eq!((unit.spanning.len(), unit.dependency.len()), (125, 64));
}

#[test]
fn graph_files_feed_the_kernels() {
    let g = random_graph(6, &WeightDistributionSpec::TruncatedNormal { mean: 1.0, std: 0.5 }, 1).unwrap();
    let back = read_graph(&write_graph(&g)).unwrap();
    assert_eq!(
        mtt::log_partition_dependency(&g).unwrap(),
        mtt::log_partition_dependency(&back).unwrap()
    );
}

#[test]
fn initial_inverse_is_exact() {
    for seed in 0..10 {
        let g = random_graph(9, &UNIFORM, seed).unwrap();
        let s = initial_state(&g).unwrap();
        let prod = s.inverse_transpose().matmul(&s.laplacian().transpose());
        assert!(prod.max_abs_diff(&Matrix::identity(9)) < 1e-10);
        assert_eq!(transition_probs(&s).len(), 10);
    }
}

#[test]
fn conditioning_matches_fresh_marginals() {
    let g = random_graph(6, &UNIFORM, 4).unwrap();
    let s = transit_state(&initial_state(&g).unwrap(), 3).unwrap();
    let s = transit_state(&s, 0).unwrap();
    // Same graph with words 1 and 2 forced onto the chosen heads.
    let forced = WeightedGraph::from_fn(6, |h, d| match d {
        1 => f64::from(h == 3) * g.weight(h, d),
        2 => f64::from(h == 0) * g.weight(h, d),
        _ => g.weight(h, d),
    })
    .unwrap();
    let fresh = mtt::marginals(&forced).unwrap();
    for (h, p) in transition_probs(&s).iter().enumerate() {
        assert!((p - fresh.get(h, 3)).abs() < 1e-10);
    }
}

#[test]
fn without_replacement_on_bias_demo() {
    let g = WeightedGraph::bias_demo();
    let mut rng = rng::seeded(3);
    let trie = trie_swor(&g, 3, &mut rng).unwrap();
    let sbs = sbs_swor(&g, 3, &mut rng).unwrap();
    let sorted = |items: &[treesample::swor::SworItem]| {
        let mut v: Vec<_> = items.iter().map(|i| (i.tree.clone(), i.logprob)).collect();
        v.sort_by(|a, b| a.0.heads().cmp(b.0.heads()));
        v
    };
    let (a, b) = (sorted(&trie.items), sorted(&sbs.items));
    assert_eq!(a.len(), 3);
    for ((ta, la), (tb, lb)) in a.iter().zip(&b) {
        assert_eq!(ta, tb);
        assert!((la - lb).abs() < 1e-9);
        assert!((la - (1.0f64 / 3.0).ln()).abs() < 1e-9);
    }
    let mass: f64 = trie.items.iter().map(|i| i.logprob.exp()).sum();
    assert!((mass - 1.0).abs() < 1e-9);
}

#[test]
fn uniform_ratio_is_near_one() {
    let s = ratio_simulation(4, &UNIFORM, 10_000, 5).unwrap();
    assert!((s.mean - 1.0).abs() <= 0.05, "{}", s.mean);
    assert_eq!(s.histogram.counts.iter().sum::<usize>() + s.histogram.overflow, 10_000);
}

#[test]
fn expected_attempts_estimates() {
    let six = expected_rejection_ratio(6, &UNIFORM, 10_000, 1).unwrap();
    let analytic = (7.0f64 / 6.0).powi(5);
    assert!((six.mean_partition_ratio - analytic).abs() <= 0.15 * analytic, "{}", six.mean_partition_ratio);
    assert!((six.count_ratio - analytic).abs() < 1e-12);

    let one = expected_rejection_ratio(1, &WeightDistributionSpec::Exponential { rate: 1.0 }, 100, 2).unwrap();
    assert_eq!(one.mean_partition_ratio, 1.0);

    let unit_mean = [
        WeightDistributionSpec::Uniform { lo: 0.0, hi: 2.0 },
        WeightDistributionSpec::Exponential { rate: 1.0 },
        WeightDistributionSpec::TruncatedNormal { mean: 1.0, std: 0.3 },
    ];
    for spec in &unit_mean {
        for n in 1..=8 {
            let r = expected_rejection_ratio(n, spec, 2_000, n as u64).unwrap();
            assert!(r.mean_partition_ratio < std::f64::consts::E + 0.5, "{spec} n={n}: {}", r.mean_partition_ratio);
        }
    }
}
