use std::fs;
use std::process::{Command, Output};

fn boost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boost"))
        .args(args)
        .env_remove("BOOST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn oracle_prints_value() {
    let o = boost(&["oracle", "--n", "3", "--beta", "0.1"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0.352");
}

#[test]
fn verify_with_seed_passes() {
    let o = boost(&["verify", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS adaboost_equivalence"));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn missing_seed_is_an_error() {
    let o = boost(&["verify"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn bad_config_path_is_an_error() {
    let o = boost(&["run", "/nonexistent/config.toml", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_writes_record_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("boost.toml");
    fs::write(
        &cfg,
        r#"
mode = "boost"
seed = 2

[dataset]
source = "planted-vote"
m = 60
class_size = 12
voters = 3
gamma_star = 0.3

[engine]
gamma = 0.1
rounds = 30
steps_per_round = 2
pool_size = 4
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = boost(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--parallelism", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS exp_loss_identity"));
    let record = fs::read_to_string(out.join("runs.jsonl")).unwrap();
    assert_eq!(record.lines().count(), 1);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("step,"));

    let o = boost(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "9"]);
    assert!(o.status.success());
    let record = fs::read_to_string(out.join("runs.jsonl")).unwrap();
    assert_eq!(record.lines().count(), 2);
    assert!(record.lines().nth(1).unwrap().contains("\"seed\":9"));
}

#[test]
fn infeasible_grid_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    fs::write(
        &cfg,
        r#"
mode = "grid"
seed = 1

[dataset]
source = "planted-vote"
m = 40
class_size = 8
voters = 3
gamma_star = 0.3

[engine]
gamma = 0.1
rounds = 1
pool_size = 1

[grid]
kind = "upper"
rs = [1]
"#,
    )
    .unwrap();
    let o = boost(&["grid", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL margin_rate[R=1]"));
}
