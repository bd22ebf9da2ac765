use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;
use treesample::colbourn::ColbournSampler;
use treesample::graph::{random_graph, read_graph, write_graph, WeightDistributionSpec, WeightedGraph};
use treesample::oracle::{self, MAX_ENUMERATION_WORDS};
use treesample::swor::{sbs_swor, trie_swor};
use treesample::tree::TreeRecord;
use treesample::wilson::{WilsonSampler, DEFAULT_MAX_ATTEMPTS};
use treesample::{mtt, rng, Error, Tree};
use treesample_cli::battery::{self, goodness_of_fit, ALPHA, EXACT_TOL};
use treesample_cli::bench::{self, Algo, BenchPlan, BenchRecord};

const EXIT_VERIFY: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "treesample", version, about = "Sample single-root dependency trees from weighted graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw trees with replacement.
    Sample(SampleArgs),
    /// Draw distinct trees without replacement.
    Swor(SworArgs),
    /// Check a graph (or the built-in battery) against exhaustive enumeration.
    Verify(VerifyArgs),
    /// Time the samplers and print CSV.
    Bench(BenchArgs),
    /// Ratio of average spanning-tree to average dependency-tree weight.
    SimulateRatio(RatioArgs),
    /// Write a graph file.
    GenGraph(GenArgs),
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Source {
    /// Graph file (JSON with `n` and `weights`).
    #[arg(long, value_name = "FILE")]
    graph: Option<PathBuf>,
    /// Random graph with N words.
    #[arg(long, value_name = "N")]
    random: Option<usize>,
}

#[derive(Args, Debug)]
struct GraphArgs {
    #[command(flatten)]
    source: Source,
    /// Weight distribution for --random, e.g. uniform:0,1, tnormal:1,1, exp:1.
    #[arg(long, value_name = "SPEC", requires = "random")]
    dist: Option<WeightDistributionSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SampleAlgo {
    WilsonMarginal,
    WilsonReject,
    WilsonRcBiased,
    Colbourn,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long, value_enum)]
    algo: SampleAlgo,
    #[command(flatten)]
    graph: GraphArgs,
    /// Number of trees.
    #[arg(short, long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write JSON lines here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Proposal budget per tree for wilson-reject.
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    max_attempts: usize,
    /// Required for wilson-rc-biased, whose samples are not distributed ∝ φ(t).
    #[arg(long)]
    i_want_biased_samples: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SworAlgo {
    Trie,
    Sbs,
}

#[derive(Args, Debug)]
struct SworArgs {
    #[arg(long, value_enum)]
    algo: SworAlgo,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(short, long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Replace every weight by 1 (keeps the sentence length).
    #[arg(long)]
    unit_weights: bool,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct VerifyTarget {
    /// Graph file with at most 8 words.
    #[arg(long, value_name = "FILE")]
    graph: Option<PathBuf>,
    /// Run the full randomized battery.
    #[arg(long)]
    battery: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    target: VerifyTarget,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draws per sampler when checking a graph file.
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    /// Print a JSON report instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    Replacement,
    Swor,
}

#[derive(Clone, Debug)]
struct Sizes(Vec<usize>);

impl std::str::FromStr for Sizes {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        bench::parse_range(s).map(Sizes)
    }
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    /// Sentence lengths: `10,20`, `10:60:10`, `16:1024:x2` or `1:1000:log10`.
    #[arg(long, value_name = "RANGE")]
    n: Option<Sizes>,
    /// Trees per measurement, same syntax as --n.
    #[arg(short, long, value_name = "RANGE")]
    k: Option<Sizes>,
    /// Comma-separated subset of the suite's algorithms.
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<Algo>>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "uniform:0,1")]
    dist: WeightDistributionSpec,
    /// Measure this many cells concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RatioArgs {
    #[arg(long)]
    dist: WeightDistributionSpec,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print histogram bins instead of per-trial ratios.
    #[arg(long)]
    histogram: bool,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct GenKind {
    /// Random graph with N words.
    #[arg(long, value_name = "N")]
    random: Option<usize>,
    /// Complete graph with N words and unit weights.
    #[arg(long, value_name = "N")]
    unit: Option<usize>,
    /// The three-word graph on which root-by-weight sampling is biased.
    #[arg(long)]
    bias_demo: bool,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    kind: GenKind,
    #[arg(long, default_value = "uniform:0,1")]
    dist: WeightDistributionSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Degenerate(_)
            | Error::StuckWalk { .. }
            | Error::Unreachable { .. }
            | Error::NoRootEdges
            | Error::RejectionBudget { .. } => EXIT_DEGENERATE,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_graph_file(path: &Path) -> Result<WeightedGraph, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    read_graph(&bytes).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

/// Random graphs come from the seed's first stream; sampling uses stream 1.
fn load_graph(args: &GraphArgs, seed: u64) -> Result<WeightedGraph, Failure> {
    match (&args.source.graph, args.source.random) {
        (Some(path), _) => read_graph_file(path),
        (None, Some(n)) => {
            let spec = args.dist.unwrap_or(WeightDistributionSpec::Uniform { lo: 0.0, hi: 1.0 });
            Ok(random_graph(n, &spec, seed)?)
        }
        (None, None) => unreachable!("clap requires a graph source"),
    }
}

fn write_json_line(out: &mut dyn Write, value: &impl Serialize) -> CmdResult {
    serde_json::to_writer(&mut *out, value).map_err(|e| Failure::usage(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> CmdResult {
    if args.algo == SampleAlgo::WilsonRcBiased && !args.i_want_biased_samples {
        return Err(Failure::usage(
            "wilson-rc-biased picks the ROOT edge by its raw weight, so its trees are biased \
             (on the bias-demo graph it returns p(R→A) = 1/2 instead of 2/3). \
             Use wilson-marginal for unbiased samples, or pass --i-want-biased-samples.",
        ));
    }
    let g = load_graph(&args.graph, args.seed)?;
    let log_z = mtt::log_partition_dependency(&g)?;
    let mut rng = rng::split(args.seed, 1);
    let mut out = output(args.out.as_deref())?;
    let record = |tree: Tree, logprob: Option<f64>| TreeRecord {
        weight: Some(tree.weight(&g)),
        logprob: Some(logprob.unwrap_or_else(|| tree.log_weight(&g) - log_z)),
        heads: tree.heads().to_vec(),
    };

    let mut attempts = 0;
    match args.algo {
        SampleAlgo::Colbourn => {
            let s = ColbournSampler::new(&g)?;
            for _ in 0..args.k {
                let (tree, logprob) = s.sample(&mut rng)?;
                write_json_line(&mut out, &record(tree, Some(logprob)))?;
            }
        }
        algo => {
            let s = WilsonSampler::new(&g);
            let s = if algo == SampleAlgo::WilsonMarginal {
                s.with_root_marginals()?
            } else {
                s
            };
            for _ in 0..args.k {
                let report = match algo {
                    SampleAlgo::WilsonMarginal => s.marginal(&mut rng)?,
                    SampleAlgo::WilsonReject => s.reject(args.max_attempts, &mut rng)?,
                    _ => s.rc_biased(&mut rng)?,
                };
                attempts += report.attempts;
                write_json_line(&mut out, &record(report.tree, None))?;
            }
        }
    }
    out.flush()?;
    if args.algo == SampleAlgo::WilsonReject && args.k > 0 {
        info!("mean proposals per tree: {:.3}", attempts as f64 / args.k as f64);
    }
    Ok(())
}

#[derive(Serialize)]
struct SworRecord {
    heads: Vec<usize>,
    weight: f64,
    logprob: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gumbel_score: Option<f64>,
    /// The graph has fewer than `k` trees with positive probability.
    truncated: bool,
}

fn cmd_swor(args: SworArgs) -> CmdResult {
    let mut g = load_graph(&args.graph, args.seed)?;
    if args.unit_weights {
        g = WeightedGraph::unit_complete(g.n());
    }
    let mut rng = rng::split(args.seed, 1);
    let result = match args.algo {
        SworAlgo::Trie => trie_swor(&g, args.k, &mut rng)?,
        SworAlgo::Sbs => sbs_swor(&g, args.k, &mut rng)?,
    };
    if result.truncated {
        eprintln!(
            "warning: only {} trees have positive probability; returned all of them instead of {}",
            result.items.len(),
            args.k
        );
    }
    let mut out = output(args.out.as_deref())?;
    for item in result.items {
        let rec = SworRecord {
            weight: item.tree.weight(&g),
            heads: item.tree.heads().to_vec(),
            logprob: item.logprob,
            gumbel_score: item.gumbel_score,
            truncated: result.truncated,
        };
        write_json_line(&mut out, &rec)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SamplerFit {
    algo: &'static str,
    samples: usize,
    tvd: f64,
    p_value: f64,
    passed: bool,
}

#[derive(Serialize)]
struct GraphReport {
    n: usize,
    z_t_oracle: f64,
    z_t_determinant: f64,
    z_d_oracle: f64,
    z_d_determinant: f64,
    marginal_max_abs_diff: f64,
    samplers: Vec<SamplerFit>,
    passed: bool,
}

fn verify_graph(path: &Path, seed: u64, samples: usize) -> Result<GraphReport, Failure> {
    let g = read_graph_file(path)?;
    if g.n() > MAX_ENUMERATION_WORDS {
        return Err(Failure::usage(format!(
            "verify enumerates every tree and supports at most {MAX_ENUMERATION_WORDS} words; the graph has {}",
            g.n()
        )));
    }
    let d = oracle::enumerate(&g)?;
    let z_t = mtt::partition_spanning(&g)?;
    let z_d = mtt::partition_dependency(&g)?;
    let marginal_diff = mtt::marginals(&g)?.max_abs_diff(&oracle::exact_marginals(&d));

    let mut samplers = Vec::new();
    for algo in Algo::REPLACEMENT {
        let mut rng = rng::split(seed, 1);
        let fit = match algo {
            Algo::WilsonMarginal => {
                let s = WilsonSampler::new(&g).with_root_marginals()?;
                goodness_of_fit(&d, samples, || s.marginal(&mut rng).map(|r| r.tree))?
            }
            Algo::WilsonReject => {
                let s = WilsonSampler::new(&g);
                goodness_of_fit(&d, samples, || s.reject(DEFAULT_MAX_ATTEMPTS, &mut rng).map(|r| r.tree))?
            }
            _ => {
                let s = ColbournSampler::new(&g)?;
                goodness_of_fit(&d, samples, || s.sample(&mut rng).map(|(t, _)| t))?
            }
        };
        samplers.push(SamplerFit {
            algo: algo.name(),
            samples,
            tvd: fit.tvd,
            p_value: fit.p_value,
            passed: fit.p_value >= ALPHA,
        });
    }
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let passed = rel(z_t, d.z_t) <= EXACT_TOL
        && rel(z_d, d.z_d) <= EXACT_TOL
        && marginal_diff <= EXACT_TOL
        && samplers.iter().all(|s| s.passed);
    Ok(GraphReport {
        n: g.n(),
        z_t_oracle: d.z_t,
        z_t_determinant: z_t,
        z_d_oracle: d.z_d,
        z_d_determinant: z_d,
        marginal_max_abs_diff: marginal_diff,
        samplers,
        passed,
    })
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let passed = if let Some(path) = &args.target.graph {
        let r = verify_graph(path, args.seed, args.samples)?;
        if args.json {
            println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
        } else {
            println!("n = {}", r.n);
            println!("Z_T  oracle {:.12e}  determinant {:.12e}", r.z_t_oracle, r.z_t_determinant);
            println!("Z_D  oracle {:.12e}  determinant {:.12e}", r.z_d_oracle, r.z_d_determinant);
            println!("marginals max |diff| {:.2e}", r.marginal_max_abs_diff);
            for s in &r.samplers {
                println!(
                    "{:<16} tvd {:.4}  chi-square p {:.4}  ({} draws) {}",
                    s.algo,
                    s.tvd,
                    s.p_value,
                    s.samples,
                    if s.passed { "ok" } else { "FAIL" }
                );
            }
            println!("{}", if r.passed { "PASS" } else { "FAIL" });
        }
        r.passed
    } else {
        let results = battery::run_all(args.seed, |r| {
            if args.json {
                eprintln!("{}", r.line());
            } else {
                println!("{}", r.line());
            }
        });
        let passed = results.iter().all(|r| r.passed);
        if args.json {
            println!("{}", serde_json::to_string_pretty(&results).expect("report serializes"));
        } else {
            println!(
                "{}/{} checks passed",
                results.iter().filter(|r| r.passed).count(),
                results.len()
            );
        }
        passed
    };
    if passed {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            message: "verification failed".into(),
        })
    }
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    let (algos, ns, ks) = match args.suite {
        Suite::Replacement => (Algo::REPLACEMENT.to_vec(), vec![10, 20, 30, 40, 50, 60], vec![100]),
        Suite::Swor => (Algo::SWOR.to_vec(), vec![14], bench::parse_range("1:1000:log10").expect("valid")),
    };
    if args.reps == 0 {
        return Err(Failure::usage("--reps must be at least 1"));
    }
    if args.jobs == 0 {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    let plan = BenchPlan {
        algos: args.algos.unwrap_or(algos),
        ns: args.n.map_or(ns, |s| s.0),
        ks: args.k.map_or(ks, |s| s.0),
        reps: args.reps,
        seed: args.seed,
        dist: args.dist,
    };
    if plan.ns.contains(&0) {
        return Err(Failure::usage("sentence lengths must be at least 1"));
    }
    if args.jobs > 1 {
        warn!("measuring {} cells concurrently; timings include contention", args.jobs);
    }
    let records: Vec<BenchRecord> = bench::run(&plan, args.jobs)?;
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "{}", BenchRecord::CSV_HEADER)?;
    for r in &records {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_simulate_ratio(args: RatioArgs) -> CmdResult {
    if args.n > MAX_ENUMERATION_WORDS {
        return Err(Failure::usage(format!(
            "--n must be at most {MAX_ENUMERATION_WORDS}, got {}",
            args.n
        )));
    }
    let summary = oracle::ratio_simulation(args.n, &args.dist, args.trials, args.seed)?;
    let count_ratio = oracle::spanning_tree_count(args.n) / oracle::dependency_tree_count(args.n);
    info!(
        "E[Z_T/Z_D] ≈ {:.4}  (|T|/|D| = {count_ratio:.4}, cap e·E[ratio] = {:.4})",
        summary.ratios.iter().sum::<f64>() / summary.trials as f64 * count_ratio,
        std::f64::consts::E * summary.mean
    );
    let mut out = output(args.out.as_deref())?;
    if args.histogram {
        let h = &summary.histogram;
        writeln!(out, "bin_lo,bin_hi,count")?;
        for (b, count) in h.counts.iter().enumerate() {
            writeln!(out, "{},{},{count}", b as f64 * h.bin_width, (b + 1) as f64 * h.bin_width)?;
        }
        writeln!(out, "{},inf,{}", h.counts.len() as f64 * h.bin_width, h.overflow)?;
    } else {
        writeln!(out, "trial,ratio")?;
        for (t, r) in summary.ratios.iter().enumerate() {
            writeln!(out, "{t},{r}")?;
        }
        writeln!(out, "mean,{}", summary.mean)?;
        writeln!(out, "stddev,{}", summary.stddev)?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_gen_graph(args: GenArgs) -> CmdResult {
    let g = match (args.kind.random, args.kind.unit) {
        (Some(n), _) => random_graph(n, &args.dist, args.seed)?,
        (_, Some(n)) => WeightedGraph::unit_complete(n),
        _ => WeightedGraph::bias_demo(),
    };
    let mut out = output(args.out.as_deref())?;
    out.write_all(&write_graph(&g))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TREESAMPLE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Swor(a) => cmd_swor(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
        Command::SimulateRatio(a) => cmd_simulate_ratio(a),
        Command::GenGraph(a) => cmd_gen_graph(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
