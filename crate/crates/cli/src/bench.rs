//! Wall-clock measurements of the samplers.
//!
//! One record per `(algo, n, k, rep)`. The graph depends only on `(n, seed)`
//! and the sampling stream only on `(seed, rep)`, so any row can be re-run
//! on its own. A warm-up run per `(algo, n, k)` is discarded.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use treesample::colbourn::ColbournSampler;
use treesample::graph::{random_graph, WeightDistributionSpec, WeightedGraph};
use treesample::rng::{self, SampleRng};
use treesample::swor::{sbs_swor, trie_swor};
use treesample::wilson::{WilsonSampler, DEFAULT_MAX_ATTEMPTS};
use treesample::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    WilsonMarginal,
    WilsonReject,
    Colbourn,
    Trie,
    Sbs,
}

impl Algo {
    pub const REPLACEMENT: [Algo; 3] = [Algo::WilsonMarginal, Algo::WilsonReject, Algo::Colbourn];
    pub const SWOR: [Algo; 2] = [Algo::Trie, Algo::Sbs];

    pub fn name(self) -> &'static str {
        match self {
            Algo::WilsonMarginal => "wilson-marginal",
            Algo::WilsonReject => "wilson-reject",
            Algo::Colbourn => "colbourn",
            Algo::Trie => "trie",
            Algo::Sbs => "sbs",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [Algo::REPLACEMENT.as_slice(), Algo::SWOR.as_slice()]
            .concat()
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub algo: String,
    pub n: usize,
    pub k: usize,
    pub rep: usize,
    pub wall_ns: u64,
    /// Mean proposals per accepted tree (rejection sampler only).
    pub attempts_mean: Option<f64>,
    pub seed: u64,
}

impl BenchRecord {
    pub const CSV_HEADER: &'static str = "algo,n,k,rep,wall_ns,attempts_mean,seed";

    pub fn csv_row(&self) -> String {
        let attempts = self.attempts_mean.map(|a| a.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.algo, self.n, self.k, self.rep, self.wall_ns, attempts, self.seed
        )
    }
}

/// Draws `k` trees with `algo`, including all per-graph setup.
/// Returns the mean attempt count for the rejection sampler.
pub fn run_once(algo: Algo, g: &WeightedGraph, k: usize, rng: &mut SampleRng) -> Result<Option<f64>> {
    match algo {
        Algo::WilsonMarginal => {
            let s = WilsonSampler::new(g).with_root_marginals()?;
            for _ in 0..k {
                s.marginal(rng)?;
            }
            Ok(None)
        }
        Algo::WilsonReject => {
            let s = WilsonSampler::new(g);
            let mut attempts = 0;
            for _ in 0..k {
                attempts += s.reject(DEFAULT_MAX_ATTEMPTS, rng)?.attempts;
            }
            Ok(Some(attempts as f64 / k.max(1) as f64))
        }
        Algo::Colbourn => {
            let s = ColbournSampler::new(g)?;
            for _ in 0..k {
                s.sample(rng)?;
            }
            Ok(None)
        }
        Algo::Trie => trie_swor(g, k, rng).map(|_| None),
        Algo::Sbs => sbs_swor(g, k, rng).map(|_| None),
    }
}

/// Times one run. Durations are clamped to at least 1ns.
pub fn time_once(algo: Algo, g: &WeightedGraph, k: usize, rng: &mut SampleRng) -> Result<(Duration, Option<f64>)> {
    let start = Instant::now();
    let attempts = run_once(algo, g, k, rng)?;
    Ok((start.elapsed().max(Duration::from_nanos(1)), attempts))
}

#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub algos: Vec<Algo>,
    pub ns: Vec<usize>,
    pub ks: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub dist: WeightDistributionSpec,
}

struct Cell<'a> {
    algo: Algo,
    n: usize,
    k: usize,
    graph: &'a WeightedGraph,
}

fn measure_cell(cell: &Cell<'_>, reps: usize, seed: u64) -> Result<Vec<BenchRecord>> {
    run_once(cell.algo, cell.graph, cell.k, &mut rng::split(seed, u64::MAX))?;
    (0..reps)
        .map(|rep| {
            let (wall, attempts_mean) = time_once(cell.algo, cell.graph, cell.k, &mut rng::split(seed, rep as u64))?;
            Ok(BenchRecord {
                algo: cell.algo.name().to_string(),
                n: cell.n,
                k: cell.k,
                rep,
                wall_ns: wall.as_nanos().min(u64::MAX as u128) as u64,
                attempts_mean,
                seed,
            })
        })
        .collect()
}

/// Runs every `(algo, n, k)` cell; `jobs > 1` measures cells concurrently,
/// which trades timing fidelity for throughput.
pub fn run(plan: &BenchPlan, jobs: usize) -> Result<Vec<BenchRecord>> {
    let graphs = plan
        .ns
        .iter()
        .map(|&n| random_graph(n, &plan.dist, plan.seed))
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for (&n, graph) in plan.ns.iter().zip(&graphs) {
        for &k in &plan.ks {
            for &algo in &plan.algos {
                cells.push(Cell { algo, n, k, graph });
            }
        }
    }
    let measured: Vec<Result<Vec<BenchRecord>>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool");
        pool.install(|| cells.par_iter().map(|c| measure_cell(c, plan.reps, plan.seed)).collect())
    } else {
        cells.iter().map(|c| measure_cell(c, plan.reps, plan.seed)).collect()
    };
    let mut out = Vec::new();
    for records in measured {
        out.extend(records?);
    }
    Ok(out)
}

pub fn median(xs: &mut [f64]) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

/// Parses `10,20,30`, `10:60:10` (inclusive step), `16:1024:x2`
/// (geometric) or `1:1000:log10` (ten log-spaced integers), or a mix
/// separated by commas. The result is sorted and deduplicated.
pub fn parse_range(s: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let fields: Vec<&str> = part.split(':').collect();
        let num = |f: &str| f.parse::<usize>().map_err(|_| format!("bad number `{f}` in `{part}`"));
        match fields.as_slice() {
            [v] => out.push(num(v)?),
            [lo, hi] | [lo, hi, _] if num(lo)? > num(hi)? => return Err(format!("empty range `{part}`")),
            [lo, hi] => out.extend(num(lo)?..=num(hi)?),
            [lo, hi, step] => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                if let Some(f) = step.strip_prefix('x') {
                    let f = num(f)?;
                    if f < 2 || lo == 0 {
                        return Err(format!("geometric range `{part}` needs factor ≥ 2 and start ≥ 1"));
                    }
                    let mut v = lo;
                    while v <= hi {
                        out.push(v);
                        v *= f;
                    }
                } else if let Some(points) = step.strip_prefix("log") {
                    let points = num(points)?;
                    if points < 2 || lo == 0 {
                        return Err(format!("log range `{part}` needs ≥ 2 points and start ≥ 1"));
                    }
                    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
                    for i in 0..points {
                        let t = i as f64 / (points - 1) as f64;
                        out.push((a + t * (b - a)).exp().round() as usize);
                    }
                } else {
                    let step = num(step)?;
                    if step == 0 {
                        return Err(format!("zero step in `{part}`"));
                    }
                    out.extend((lo..=hi).step_by(step));
                }
            }
            _ => return Err(format!("cannot parse range `{part}`")),
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err("empty range".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("10:60:10").unwrap(), vec![10, 20, 30, 40, 50, 60]);
        assert_eq!(parse_range("16:1024:x2").unwrap(), vec![16, 32, 64, 128, 256, 512, 1024]);
        assert_eq!(parse_range("3,1,2:4").unwrap(), vec![1, 2, 3, 4]);
        let log = parse_range("1:1000:log4").unwrap();
        assert_eq!(log, vec![1, 10, 100, 1000]);
        assert!(parse_range("5:1").is_err());
        assert!(parse_range("a").is_err());
        assert!(parse_range("1:9:0").is_err());
    }

    #[test]
    fn algo_names_round_trip() {
        for a in Algo::REPLACEMENT.iter().chain(&Algo::SWOR) {
            assert_eq!(a.name().parse::<Algo>().unwrap(), *a);
        }
        assert!("wilson".parse::<Algo>().is_err());
    }

    #[test]
    fn records_are_reproducible_apart_from_time() {
        let plan = BenchPlan {
            algos: vec![Algo::WilsonReject, Algo::Trie],
            ns: vec![4, 6],
            ks: vec![5],
            reps: 2,
            seed: 3,
            dist: WeightDistributionSpec::Uniform { lo: 0.0, hi: 1.0 },
        };
        let a = run(&plan, 1).unwrap();
        let b = run(&plan, 2).unwrap();
        assert_eq!(a.len(), 8);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((&x.algo, x.n, x.k, x.rep, x.attempts_mean), (&y.algo, y.n, y.k, y.rep, y.attempts_mean));
            assert!(x.wall_ns > 0);
        }
        assert!(a[0].csv_row().starts_with("wilson-reject,4,5,0,"));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
