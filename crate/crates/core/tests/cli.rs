use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proxycrowd::io::{load_dataset, Analysis, ExperimentConfig};
use proxycrowd::{AnswerDomain, Population};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_proxycrowd"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

const FULL: &str = r#"{
    "population": {"synthetic": {"low": 0.2, "high": 1.0, "questions": 20}},
    "grid": {"alpha": [0.2, 0.4], "beta": [0, "1/3"], "budget": ["8k"]},
    "trials": 200,
    "seed": 42,
    "analyses": ["loss", "sweep", "weight_by_rank", "histogram", "bound_check", "weighted_vs_unweighted", "all_followers"],
    "histogram": {"bins": 5, "workers": 100},
    "bound_check": {"p_high": [0.8, 0.9], "p_low": [0.6], "p_follower": [0.7], "follower_questions": [3], "mc_samples": 5000}
}"#;

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "full.json", FULL);
    let mut outputs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "4"), ("c", "1")] {
        let out = dir.path().join(name);
        let o = run(&[
            "run",
            config.to_str().unwrap(),
            "--output-dir",
            out.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(read_dir_sorted(&out));
    }
    assert_eq!(outputs[0].len(), 8);
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    for (name, bytes) in &outputs[0] {
        assert!(!bytes.contains(&b'\r'), "{name} has CR line endings");
    }
}

#[test]
fn bound_check_grid_of_81_points_dominates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        "bound.json",
        r#"{
            "population": {"synthetic": {"low": 0.5, "high": 1.0, "questions": 1}},
            "seed": 5,
            "analyses": ["bound_check"],
            "bound_check": {
                "p_high": [0.8, 0.9, 0.95],
                "p_low": [0.55, 0.6, 0.7],
                "p_follower": [0.6, 0.7, 0.9],
                "follower_questions": [1, 5, 10]
            }
        }"#,
    );
    let o = run(&["run", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("bound_check.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let dom = headers.iter().position(|h| h == "dominates").unwrap();
    let rows: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 81);
    assert!(rows.iter().all(|r| &r[dom] == "true"));
}

#[test]
fn validation_errors_exit_1_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let infeasible = write_config(
        dir.path(),
        "bad.json",
        &format!(
            r#"{{"population": {{"synthetic": {{"low": 0.2, "high": 1.0, "questions": 20}}}},
                "grid": {{"alpha": [0.2], "beta": [0.5], "budget": ["1k"]}},
                "trials": 10, "seed": 1, "output_dir": {out:?}, "analyses": ["loss"]}}"#
        ),
    );
    let o = run(&["run", infeasible.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());

    let no_seed = write_config(
        dir.path(),
        "noseed.json",
        r#"{"population": {"synthetic": {"low": 0.2, "high": 1.0, "questions": 20}}, "analyses": ["histogram"]}"#,
    );
    assert_eq!(run(&["run", no_seed.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(run(&["run", "/nonexistent/config.json"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["histogram", "--low", "0.9", "--high", "0.1"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let config = write_config(
        dir.path(),
        "ok.json",
        r#"{"population": {"synthetic": {"low": 0.2, "high": 1.0, "questions": 5}}, "seed": 1, "analyses": ["histogram"]}"#,
    );
    let o = run(&[
        "run",
        config.to_str().unwrap(),
        "--output-dir",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn generated_dataset_loads_and_feeds_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("synthetic.csv");
    let o = run(&[
        "gen-synthetic", "--low", "0.3", "--high", "0.9", "--questions", "12", "--workers", "40", "--seed", "9", "-o",
        data.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let loaded = load_dataset(&data, &AnswerDomain::binary()).unwrap();
    assert_eq!(loaded.population.len(), 40);
    assert_eq!(loaded.population.question_count(), 12);
    assert_eq!(loaded.dropped, 0);

    let o = run(&["histogram", "--dataset", data.to_str().unwrap(), "--bins", "4"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let counts: u64 = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(counts, 40);

    let o = run(&["sweep-beta", "--dataset", data.to_str().unwrap(), "--trials", "50", "--betas", "0,1/3", "--seed", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 3);

    let o = run(&["weights", "--dataset", data.to_str().unwrap(), "--trials", "50"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 11);
}

#[test]
fn seed_and_trials_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "loss.json",
        r#"{"population": {"synthetic": {"low": 0.2, "high": 1.0, "questions": 10}},
            "grid": {"alpha": [0.2], "beta": [0], "budget": ["3k"]},
            "trials": 5000, "seed": 1, "analyses": ["loss"]}"#,
    );
    let out = dir.path().join("o");
    let o = run(&[
        "run",
        config.to_str().unwrap(),
        "--seed",
        "77",
        "--trials",
        "13",
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let loss = fs::read_to_string(out.join("loss.csv")).unwrap();
    let row = loss.lines().nth(1).unwrap();
    assert!(row.contains(",13,77,"), "{row}");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 77);
    assert_eq!(manifest["config"]["trials"], 13);
    let mut c = ExperimentConfig::load(&config).unwrap();
    c.seed = 77;
    c.trials = 13;
    assert_eq!(manifest["config_hash"], c.hash());
    assert!(manifest.get("wall_time_seconds").is_none());
    assert_eq!(Analysis::Loss.table_name(), "loss");
}
