use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use treesample::tree::TreeRecord;
use treesample::Tree;

fn treesample(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treesample"))
        .args(args)
        .env_remove("TREESAMPLE_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn records(o: &Output) -> Vec<serde_json::Value> {
    stdout(o).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn heads_of(v: &serde_json::Value) -> Tree {
    let heads: Vec<usize> = serde_json::from_value(v["heads"].clone()).unwrap();
    Tree::new(heads).unwrap()
}

fn write_bias_demo(dir: &Path) -> String {
    let path = dir.join("bias.json");
    let o = treesample(&["gen-graph", "--bias-demo", "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    path.to_str().unwrap().to_string()
}

#[test]
fn sample_emits_valid_deterministic_trees() {
    let args = [
        "sample", "--algo", "wilson-marginal", "--random", "5", "--dist", "uniform:0,1", "-k", "100", "--seed", "1",
    ];
    let a = treesample(&args);
    let b = treesample(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let lines: Vec<&str> = std::str::from_utf8(&a.stdout).unwrap().lines().collect();
    assert_eq!(lines.len(), 100);
    for line in lines {
        let rec: TreeRecord = serde_json::from_str(line).unwrap();
        assert!(rec.tree().unwrap().is_dependency_tree());
        assert!(rec.weight.unwrap() > 0.0);
        assert!(rec.logprob.unwrap() < 0.0);
    }
}

#[test]
fn every_sampler_runs_from_a_graph_file() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write_bias_demo(dir.path());
    for algo in ["wilson-marginal", "wilson-reject", "colbourn"] {
        let o = treesample(&["sample", "--algo", algo, "--graph", &graph, "-k", "20", "--seed", "3"]);
        assert!(o.status.success(), "{algo}: {}", stderr(&o));
        for rec in records(&o) {
            let t = heads_of(&rec);
            assert!(t.is_dependency_tree());
            let lp = rec["logprob"].as_f64().unwrap();
            assert!((lp.exp() - 1.0 / 3.0).abs() < 1e-12, "{algo}: {lp}");
        }
    }
}

#[test]
fn out_flag_writes_the_same_bytes_as_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trees.jsonl");
    let base = ["sample", "--algo", "colbourn", "--random", "6", "-k", "10", "--seed", "8"];
    let printed = treesample(&base);
    let mut with_out = base.to_vec();
    with_out.extend(["--out", path.to_str().unwrap()]);
    let o = treesample(&with_out);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert_eq!(fs::read(&path).unwrap(), printed.stdout);
}

#[test]
fn biased_sampler_needs_acknowledgement() {
    let o = treesample(&["sample", "--algo", "wilson-rc-biased", "--random", "4", "-k", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("biased"));

    let o = treesample(&[
        "sample", "--algo", "wilson-rc-biased", "--random", "4", "-k", "5", "--i-want-biased-samples",
    ]);
    assert!(o.status.success());
    assert_eq!(records(&o).len(), 5);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"n\": 2, \"weights\": [[0, 1], [0, 0]]}").unwrap();
    let bad = bad.to_str().unwrap();
    let not_json = dir.path().join("garbage.json");
    fs::write(&not_json, "weights?").unwrap();

    for args in [
        vec!["verify", "--graph", bad],
        vec!["verify", "--graph", not_json.to_str().unwrap()],
        vec!["verify", "--graph", "/nonexistent/graph.json"],
        vec!["sample", "--algo", "colbourn", "--graph", bad],
        vec!["sample", "--algo", "colbourn", "--random", "3", "--graph", bad],
        vec!["sample", "--algo", "nope", "--random", "3"],
        vec!["sample", "--algo", "colbourn", "--random", "3", "--dist", "uniform:2,1"],
        vec!["simulate-ratio", "--dist", "uniform:0,1", "--n", "9", "--trials", "10"],
        vec!["bench", "--suite", "swor", "--n", "5:1"],
    ] {
        let o = treesample(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn degenerate_graph_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("no_root.json");
    fs::write(&path, "{\"n\": 2, \"weights\": [[0, 0, 0], [0, 0, 1], [0, 1, 0]]}").unwrap();
    for algo in ["colbourn", "wilson-marginal", "wilson-reject"] {
        let o = treesample(&["sample", "--algo", algo, "--graph", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(3), "{algo}: {}", stderr(&o));
    }
}

#[test]
fn verify_reports_bias_demo_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write_bias_demo(dir.path());
    let o = treesample(&["verify", "--graph", &graph, "--json", "--seed", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["z_t_oracle"].as_f64(), Some(5.0));
    assert_eq!(report["z_d_oracle"].as_f64(), Some(3.0));
    assert!((report["z_d_determinant"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    assert!(report["marginal_max_abs_diff"].as_f64().unwrap() < 1e-9);
    assert_eq!(report["samplers"].as_array().unwrap().len(), 3);

    let text = treesample(&["verify", "--graph", &graph]);
    assert!(text.status.success());
    assert!(stdout(&text).contains("PASS"));
}

#[test]
fn swor_unit_weights_returns_all_nine_trees() {
    let o = treesample(&[
        "swor", "--algo", "trie", "--random", "3", "--dist", "uniform:0,1", "-k", "9", "--seed", "2", "--unit-weights",
    ]);
    assert!(o.status.success());
    let recs = records(&o);
    let trees: HashSet<Tree> = recs.iter().map(heads_of).collect();
    assert_eq!(trees.len(), 9);
    for r in &recs {
        assert!((r["logprob"].as_f64().unwrap() - (1.0f64 / 9.0).ln()).abs() < 1e-12);
        assert_eq!(r["truncated"], false);
    }
}

#[test]
fn trie_and_sbs_agree_at_full_support() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    let g = treesample(&["gen-graph", "--random", "3", "--dist", "exp:1", "--seed", "5", "--out", path.to_str().unwrap()]);
    assert!(g.status.success());
    let sets: Vec<HashSet<Tree>> = ["trie", "sbs"]
        .iter()
        .map(|algo| {
            let o = treesample(&["swor", "--algo", algo, "--graph", path.to_str().unwrap(), "-k", "9", "--seed", "4"]);
            assert!(o.status.success());
            records(&o).iter().map(heads_of).collect()
        })
        .collect();
    assert_eq!(sets[0].len(), 9);
    assert_eq!(sets[0], sets[1]);
}

#[test]
fn swor_single_tree_and_truncation() {
    let one = treesample(&["swor", "--algo", "sbs", "--random", "6", "-k", "1", "--seed", "9"]);
    assert!(one.status.success());
    assert_eq!(records(&one).len(), 1);

    let over = treesample(&["swor", "--algo", "sbs", "--random", "3", "-k", "20", "--unit-weights"]);
    assert_eq!(over.status.code(), Some(0));
    assert!(stderr(&over).contains("only 9 trees"));
    let recs = records(&over);
    assert_eq!(recs.len(), 9);
    assert!(recs.iter().all(|r| r["truncated"] == true));
    let scores: Vec<f64> = recs.iter().map(|r| r["gumbel_score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn simulate_ratio_rows_and_summary() {
    let o = treesample(&["simulate-ratio", "--dist", "uniform:0,1", "--n", "4", "--trials", "1", "--seed", "3"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "trial,ratio");
    assert!(lines[1].starts_with("0,"));
    assert!(lines[2].starts_with("mean,"));
    assert!(lines[3].starts_with("stddev,"));
    assert_eq!(lines.len(), 4);

    let args = ["simulate-ratio", "--dist", "exp:1", "--n", "3", "--trials", "200", "--seed", "1"];
    assert_eq!(treesample(&args).stdout, treesample(&args).stdout);

    let h = treesample(&["simulate-ratio", "--dist", "exp:1", "--n", "3", "--trials", "500", "--histogram"]);
    let out = stdout(&h);
    assert!(out.starts_with("bin_lo,bin_hi,count"));
    let total: usize = out.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 500);
}

fn trial_ratios(out: &str) -> Vec<f64> {
    out.lines()
        .skip(1)
        .filter_map(|l| l.split_once(','))
        .filter(|(t, _)| t.parse::<usize>().is_ok())
        .map(|(_, r)| r.parse().unwrap())
        .collect()
}

#[test]
fn uniform_ratio_mean_is_one() {
    let o = treesample(&["simulate-ratio", "--dist", "uniform:0,1", "--n", "4", "--trials", "10000", "--seed", "1"]);
    let ratios = trial_ratios(&stdout(&o));
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 1.0).abs() <= 0.05, "{mean}");
}

// Exponential weights at n = 3: mean within 0.05 of 1 and more than 95% of
// ratios below 2. Exact enumeration puts the mean near 1.075 and the
// fraction near 0.945, so this currently fails.
#[test]
fn exponential_ratio_mean_is_one_and_mostly_below_two() {
    let o = treesample(&["simulate-ratio", "--dist", "exp:1", "--n", "3", "--trials", "10000", "--seed", "1"]);
    let ratios = trial_ratios(&stdout(&o));
    assert_eq!(ratios.len(), 10_000);
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let below_two = ratios.iter().filter(|&&r| r < 2.0).count() as f64 / ratios.len() as f64;
    assert!(
        (mean - 1.0).abs() <= 0.05 && below_two > 0.95,
        "mean {mean:.4}, fraction below 2 {below_two:.4}"
    );
}

#[test]
fn bench_writes_one_row_per_rep() {
    let o = treesample(&["bench", "--suite", "replacement", "--n", "4,8", "-k", "5", "--reps", "2", "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("algo,n,k,rep,wall_ns,attempts_mean,seed"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3 * 2 * 2);
    for r in &rows {
        assert_eq!(r.len(), 7);
        assert!(r[4].parse::<u64>().unwrap() > 0);
        assert_eq!(r[6], "7");
        assert_eq!(r[5].is_empty(), r[0] != "wilson-reject");
    }

    let swor = treesample(&["bench", "--suite", "swor", "--n", "5", "-k", "1:8:x2", "--reps", "1", "--algos", "sbs"]);
    assert!(swor.status.success());
    assert_eq!(stdout(&swor).lines().count(), 1 + 4);
}

#[test]
fn log_level_comes_from_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_treesample"))
        .args(["sample", "--algo", "wilson-reject", "--random", "5", "-k", "10"])
        .env("TREESAMPLE_LOG", "info")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stderr(&o).contains("mean proposals per tree"));
    assert!(!stderr(&treesample(&["sample", "--algo", "wilson-reject", "--random", "5", "-k", "10"])).contains("INFO"));
}
