//! `run`, `sweep` and `validate`.

use std::fs;
use std::path::{Path, PathBuf};

use semcom_core::channel::{sample_power_gain, shannon_rate};
use semcom_core::domain::{decode_action_index, encode_action_index, NUM_ACTIONS};
use semcom_core::dqn::{gradient_check, MlpParams};
use semcom_core::rng::substream;
use semcom_core::simulator::{run_experiment, threshold_sweep, SimConfig};

use crate::config::snapshot;
use crate::output::{corpus_csv, overhead_csv, rewards_series_csv, steps_csv, summary_csv};
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.cfg";

/// Record of one command invocation. The manifest file is itself a valid
/// config file: passing it back via `--config` reproduces the outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub master_seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = format!("# semcom {} {}\n", self.command, self.version);
        s.push_str(&format!("# master_seed {}\n", self.master_seed));
        s.push_str(&format!("# outputs {}\n", self.outputs.join(" ")));
        for (k, v) in &self.config {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>, outputs: &mut Vec<String>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
    outputs.push(name.to_string());
    Ok(())
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("creating {}: {e}", dir.display())))
}

fn finish(dir: &Path, command: &str, cfg: &SimConfig, mut outputs: Vec<String>) -> Result<RunManifest, CliError> {
    outputs.push(MANIFEST_FILE.to_string());
    let manifest = RunManifest {
        command: command.to_string(),
        config: snapshot(cfg),
        master_seed: cfg.master_seed,
        version: VERSION.to_string(),
        outputs,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.render())
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
    Ok(manifest)
}

/// Runs every configured method once and writes per-step, per-method and
/// series tables plus final Q-network checkpoints.
pub fn cmd_run(cfg: &SimConfig, out_dir: &Path) -> Result<RunManifest, CliError> {
    prepare_dir(out_dir)?;
    let result = run_experiment(cfg).map_err(CliError::from_core)?;
    let mut outputs = Vec::new();
    write(out_dir, "steps.csv", steps_csv(&result.records), &mut outputs)?;
    write(out_dir, "summary.csv", summary_csv(&result), &mut outputs)?;
    write(out_dir, "rewards_series.csv", rewards_series_csv(&result), &mut outputs)?;
    let corpus = semcom_core::domain::generate_prompt_corpus(cfg.master_seed);
    write(out_dir, "corpus.csv", corpus_csv(&corpus), &mut outputs)?;
    for (method, params) in &result.networks {
        let mut bytes = Vec::new();
        params.write_checkpoint(&mut bytes).map_err(CliError::from_core)?;
        write(out_dir, &format!("{method}.qnet"), bytes, &mut outputs)?;
    }
    for r in &result.results {
        log::info!(
            "{:<14} final-{} mean reward {:.4}  retx/decision {:.3}",
            r.method.name(),
            semcom_core::simulator::TAIL_STEPS,
            r.final_mean_reward,
            r.mean_retransmissions_per_decision()
        );
    }
    finish(out_dir, "run", cfg, outputs)
}

pub fn cmd_sweep(cfg: &SimConfig, thresholds: &[f64], out_dir: &Path) -> Result<RunManifest, CliError> {
    if thresholds.is_empty() {
        return Err(CliError::Config("sim.thresholds: threshold list is empty".into()));
    }
    prepare_dir(out_dir)?;
    let rows = threshold_sweep(cfg, thresholds).map_err(CliError::from_core)?;
    let mut outputs = Vec::new();
    write(out_dir, "overhead.csv", overhead_csv(&rows), &mut outputs)?;
    let cfg = SimConfig { thresholds: thresholds.to_vec(), ..cfg.clone() };
    finish(out_dir, "sweep", &cfg, outputs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        self.checks
            .iter()
            .map(|c| format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect()
    }
}

fn check_gradient() -> CheckResult {
    let mut rng = substream(0x9d, "validate.gradient", &[]);
    let worst = gradient_check(&mut rng, 10, 1e-5);
    CheckResult {
        name: "gradient_check",
        passed: worst < 1e-4,
        detail: format!("max relative error {worst:.2e} over 10 networks (limit 1e-4)"),
    }
}

fn check_channel() -> CheckResult {
    let n = 100_000;
    let mut rng = substream(0x9d, "validate.channel", &[]);
    let mut gains: Vec<f64> = (0..n).map(|_| sample_power_gain(&mut rng)).collect();
    let mean = gains.iter().sum::<f64>() / n as f64;
    gains.sort_by(f64::total_cmp);
    let ks = gains
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let cdf = 1.0 - (-g).exp();
            (cdf - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - cdf).abs())
        })
        .fold(0.0, f64::max);
    let rate_ok = (shannon_rate(1.4e6, 30.0) - 13_954_116.76).abs() <= 1.0
        && (shannon_rate(1.4e6, 0.0) - 1.4e6).abs() < 1e-6
        && (shannon_rate(1.4e6, -13.0) - 98_770.0).abs() <= 50.0;
    // KS critical value at N = 1e5 and α = 0.001 is about 0.0062.
    CheckResult {
        name: "channel_statistics",
        passed: (mean - 1.0).abs() < 0.01 && ks < 0.0062 && rate_ok,
        detail: format!("mean gain {mean:.4}, KS {ks:.4} (N={n}), rate table {}", if rate_ok { "ok" } else { "mismatch" }),
    }
}

fn check_codec() -> CheckResult {
    let ok = (0..NUM_ACTIONS).all(|i| decode_action_index(i).is_ok_and(|d| encode_action_index(&d) == i))
        && decode_action_index(NUM_ACTIONS).is_err();
    CheckResult {
        name: "action_codec_round_trip",
        passed: ok,
        detail: format!("{NUM_ACTIONS} indices"),
    }
}

fn check_determinism() -> CheckResult {
    let cfg = SimConfig { n_steps: 10, n_users: 4, master_seed: 7, ..Default::default() };
    let detail;
    let passed = match (run_experiment(&cfg), run_experiment(&cfg)) {
        (Ok(a), Ok(b)) => {
            let same = a.records == b.records;
            detail = format!("{} records, identical: {same}", a.records.len());
            same
        }
        (Err(e), _) | (_, Err(e)) => {
            detail = e.to_string();
            false
        }
    };
    CheckResult { name: "determinism_smoke", passed, detail }
}

fn check_checkpoint(path: Option<&Path>) -> CheckResult {
    let (passed, detail) = match path {
        Some(path) => match fs::File::open(path).map_err(Into::into).and_then(MlpParams::read_checkpoint) {
            Ok(p) => (true, format!("{} loaded, {} parameters", path.display(), p.num_params())),
            Err(e) => (false, format!("{}: {e}", path.display())),
        },
        None => {
            let p = MlpParams::init(&mut substream(0x9d, "validate.checkpoint", &[]));
            let mut bytes = Vec::new();
            let back = p.write_checkpoint(&mut bytes).and_then(|_| MlpParams::read_checkpoint(&bytes[..]));
            match back {
                Ok(q) if q == p => (true, format!("in-memory round trip, {} bytes", bytes.len())),
                Ok(_) => (false, "round trip changed parameters".into()),
                Err(e) => (false, e.to_string()),
            }
        }
    };
    CheckResult { name: "checkpoint", passed, detail }
}

/// Fast invariant suite.
pub fn cmd_validate(checkpoint: Option<&Path>) -> ValidationReport {
    ValidationReport {
        checks: vec![
            check_gradient(),
            check_channel(),
            check_codec(),
            check_determinism(),
            check_checkpoint(checkpoint),
        ],
    }
}

pub fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
