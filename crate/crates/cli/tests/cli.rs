use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use semcom_cli::output::{OVERHEAD_HEADER, STEPS_HEADER, SUMMARY_HEADER};

fn semcom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semcom"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

const SMALL: [&str; 4] = ["--set", "sim.n_users=3", "--set", "sim.n_steps=20"];

#[test]
fn run_writes_tables_with_expected_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["run", "--out", out, "--seed", "5", "--methods", "greedy,pure_dqn,llm_gate"];
    args.extend(SMALL);
    let res = semcom(&args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let steps = lines(&dir.path().join("steps.csv"));
    assert_eq!(steps[0], STEPS_HEADER);
    assert_eq!(steps.len(), 1 + 3 * 3 * 20);
    let summary = lines(&dir.path().join("summary.csv"));
    assert_eq!(summary[0], SUMMARY_HEADER);
    assert_eq!(summary.len(), 4);
    let series = lines(&dir.path().join("rewards_series.csv"));
    assert_eq!(series[0], "step,greedy,pure_dqn,llm_gate");
    assert_eq!(series.len(), 21);
    assert_eq!(lines(&dir.path().join("corpus.csv")).len(), 101);
    assert_eq!(fs::read(dir.path().join("pure_dqn.qnet")).unwrap().len(), 16 + 8 * 6880);
    assert!(!dir.path().join("greedy.qnet").exists());
}

#[test]
fn manifest_reproduces_the_run() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--out", first.path().to_str().unwrap(), "--seed", "17"];
    args.extend(SMALL);
    assert!(semcom(&args).status.success());

    let manifest = first.path().join("manifest.cfg");
    let text = fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("sim.master_seed=17"));
    let res = semcom(&["run", "--config", manifest.to_str().unwrap(), "--out", second.path().to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["steps.csv", "summary.csv", "rewards_series.csv"] {
        assert_eq!(fs::read(first.path().join(f)).unwrap(), fs::read(second.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_writes_one_row_per_method_and_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "sweep",
        "--out",
        dir.path().to_str().unwrap(),
        "--thresholds",
        "0.3,0.9",
        "--methods",
        "greedy,random",
    ];
    args.extend(SMALL);
    assert!(semcom(&args).status.success());
    let rows = lines(&dir.path().join("overhead.csv"));
    assert_eq!(rows[0], OVERHEAD_HEADER);
    assert_eq!(rows.len(), 1 + 2 * 2);
    assert!(rows[1].starts_with("greedy,0.3,"));
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let res = semcom(&["run", "--set", "sim.n_userz=3"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("sim.n_userz"));

    let res = semcom(&["run", "--methods", "greedy,oracle"]);
    assert_eq!(res.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "# comment\nsim.outage_prob = 1.5\n").unwrap();
    let res = semcom(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn validate_passes_and_rejects_corrupt_checkpoints() {
    let res = semcom(&["validate"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stdout));
    let report = String::from_utf8_lossy(&res.stdout).into_owned();
    for check in ["gradient_check", "channel_statistics", "action_codec_round_trip", "determinism_smoke", "checkpoint"] {
        assert!(report.contains(&format!("PASS {check}")), "{report}");
    }

    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--out", dir.path().to_str().unwrap(), "--methods", "pure_dqn"];
    args.extend(SMALL);
    assert!(semcom(&args).status.success());
    let good = dir.path().join("pure_dqn.qnet");
    assert!(semcom(&["validate", "--checkpoint", good.to_str().unwrap()]).status.success());

    let mut bytes = fs::read(&good).unwrap();
    bytes.truncate(bytes.len() - 5);
    let bad = dir.path().join("truncated.qnet");
    fs::write(&bad, &bytes).unwrap();
    let res = semcom(&["validate", "--checkpoint", bad.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&res.stdout).contains("FAIL checkpoint"));

    bytes = fs::read(&good).unwrap();
    bytes[0] = b'X';
    fs::write(&bad, &bytes).unwrap();
    assert_eq!(semcom(&["validate", "--checkpoint", bad.to_str().unwrap()]).status.code(), Some(4));
}
