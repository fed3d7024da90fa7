use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3
hidden = 32
sft_epochs = 3
dpo_steps = 4
sample_n = 24
max_attempts_factor = 50
rejected_per_chosen = 2
unique_n = 10
"#;

fn alloygen(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alloygen"))
        .current_dir(dir)
        .env_remove("ALLOYGEN_CONFIG")
        .env("RUST_LOG", "warn")
        .args(["--config", "run.toml"])
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = alloygen(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn every_stage_runs_and_writes_its_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), SMALL).unwrap();
    ok(d, &["gen-pools"]);
    ok(d, &["gen-sft", "--limit", "1000"]);
    assert_eq!(lines(&d.join("run/sft.jsonl")), 1000);
    ok(d, &["train-sft"]);
    assert_eq!(fs::read_to_string(d.join("run/sft_log.csv")).unwrap().lines().next(), Some("epoch,loss"));
    ok(d, &["sample"]);
    let n = lines(&d.join("run/samples.jsonl"));
    assert!((1..=24).contains(&n));
    ok(d, &["score"]);
    assert_eq!(lines(&d.join("run/scored.jsonl")), n, "surrogate scores every candidate");
    assert!(!d.join("run/scored.failures.jsonl").exists());
    ok(d, &["build-dpo", "--top-frac", "0.5"]);
    ok(d, &["train-dpo"]);
    assert_eq!(lines(&d.join("run/dpo_log.csv")), 5);
    ok(d, &["eval", "--scored", "run/scored.jsonl", "--reference-limit", "400"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("run/report.json")).unwrap()).unwrap();
    assert_eq!(report["n_samples"], n);
    assert!(report["mean_reward"].as_f64().unwrap() <= 0.0);
    ok(d, &["baseline", "--n", "50"]);
    assert_eq!(lines(&d.join("run/baseline.jsonl")), 50);
    ok(d, &["analyze", "--before", "run/scored.jsonl", "--after", "run/scored.jsonl", "--query", "Mo,Nb"]);
    for f in ["wdl.csv", "objectives.csv", "element_freq.csv", "top_combos.csv", "analysis.json", "summary.txt"] {
        assert!(d.join("run/analysis").join(f).exists(), "{f}");
    }
    let wdl = fs::read_to_string(d.join("run/analysis/wdl.csv")).unwrap();
    assert_eq!(wdl.lines().nth(1), Some("0,100,0"), "a set against itself is all draws");
}

#[test]
fn missing_input_and_bad_config_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), SMALL).unwrap();
    let out = alloygen(d, &["train-sft"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sft.jsonl"));

    fs::write(d.join("run.toml"), "top_frac = 2.0\n").unwrap();
    assert_eq!(alloygen(d, &["gen-pools"]).status.code(), Some(2));
    fs::write(d.join("run.toml"), "no_such_key = 1\n").unwrap();
    assert_eq!(alloygen(d, &["gen-pools"]).status.code(), Some(2));
}

#[test]
fn environment_overrides_file_and_show_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), SMALL).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_alloygen"))
        .current_dir(d)
        .env("ALLOYGEN_BETA", "0.125")
        .env("ALLOYGEN_ORACLE", "surrogate")
        .args(["--config", "run.toml", "--seed", "99", "--show-config"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let shown: toml::Table = toml::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(shown["beta"].as_float(), Some(0.125));
    assert_eq!(shown["seed"].as_integer(), Some(99));
    assert_eq!(shown["hidden"].as_integer(), Some(32));
}
