//! Line-oriented `section.key=value` configuration.
//!
//! Resolution order: built-in defaults, then the config file, then command
//! line overrides. Every key is known in advance; anything else is an error.

use std::fs;
use std::path::Path;

use semcom_core::domain::{Modality, TaskCategory};
use semcom_core::policies::LlmGateConfig;
use semcom_core::simulator::{Method, SimConfig};

use crate::CliError;

fn err(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    let x: f64 = v.trim().parse().map_err(|_| err(key, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(err(key, "must be finite"));
    }
    Ok(x)
}

fn parse_int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim().parse().map_err(|_| err(key, format!("`{v}` is not a nonnegative integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(err(key, format!("`{v}` is not a boolean"))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    v.split(',').map(|s| parse_f64(key, s)).collect()
}

fn in_range(key: &str, x: f64, lo: f64, hi: f64) -> Result<f64, CliError> {
    if x < lo || x > hi {
        return Err(err(key, format!("{x} outside [{lo}, {hi}]")));
    }
    Ok(x)
}

fn positive(key: &str, x: f64) -> Result<f64, CliError> {
    if x <= 0.0 {
        return Err(err(key, format!("{x} must be positive")));
    }
    Ok(x)
}

fn threshold(key: &str, x: f64) -> Result<f64, CliError> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(err(key, format!("{x} outside (0, 1]")));
    }
    Ok(x)
}

pub fn parse_methods(key: &str, v: &str) -> Result<Vec<Method>, CliError> {
    let methods: Vec<Method> = v
        .split(',')
        .map(|s| s.trim().parse::<Method>().map_err(|e| err(key, e)))
        .collect::<Result<_, _>>()?;
    if methods.is_empty() {
        return Err(err(key, "method list is empty"));
    }
    Ok(methods)
}

fn llm(cfg: &mut SimConfig) -> &mut LlmGateConfig {
    cfg.llm.get_or_insert_with(LlmGateConfig::default)
}

/// Applies one `key=value` assignment.
pub fn apply(cfg: &mut SimConfig, key: &str, value: &str) -> Result<(), CliError> {
    let v = value.trim();
    match key {
        "sim.n_users" => {
            cfg.n_users = parse_int(key, v)?;
            if cfg.n_users == 0 {
                return Err(err(key, "must be at least 1"));
            }
        }
        "sim.n_steps" => {
            cfg.n_steps = parse_int(key, v)?;
            if cfg.n_steps == 0 {
                return Err(err(key, "must be at least 1"));
            }
        }
        "sim.outage_prob" => cfg.outage_prob = in_range(key, parse_f64(key, v)?, 0.0, 1.0)?,
        "sim.methods" => cfg.methods = parse_methods(key, v)?,
        "sim.theta" => cfg.theta = threshold(key, parse_f64(key, v)?)?,
        "sim.thresholds" => {
            cfg.thresholds =
                parse_list(key, v)?.into_iter().map(|x| threshold(key, x)).collect::<Result<_, _>>()?
        }
        "sim.master_seed" => cfg.master_seed = parse_int(key, v)?,
        "sim.train" => cfg.train = parse_bool(key, v)?,
        "sim.latency_tolerance_ms" => cfg.latency_tolerance_ms = positive(key, parse_f64(key, v)?)?,

        "channel.bandwidth_hz" => cfg.channel.bandwidth_hz = positive(key, parse_f64(key, v)?)?,
        "channel.slot_ms" => cfg.channel.slot_ms = positive(key, parse_f64(key, v)?)?,
        "channel.snr_clamp_db_min" => cfg.channel.snr_clamp_db.0 = parse_f64(key, v)?,
        "channel.snr_clamp_db_max" => cfg.channel.snr_clamp_db.1 = parse_f64(key, v)?,
        "channel.mean_snr_low_db" => cfg.channel.mean_snr_range_db.0 = parse_f64(key, v)?,
        "channel.mean_snr_high_db" => cfg.channel.mean_snr_range_db.1 = parse_f64(key, v)?,

        "fidelity.alpha" => {
            let a = parse_f64(key, v)?;
            if !(a > 0.0 && a <= 1.0) {
                return Err(err(key, format!("{a} outside (0, 1]")));
            }
            cfg.fidelity.matrix.alpha = a;
        }
        "fidelity.lambda" => cfg.fidelity.lambda = in_range(key, parse_f64(key, v)?, 0.0, f64::MAX)?,
        "fidelity.k_max_cap" => {
            cfg.fidelity.k_max_cap = parse_int(key, v)?;
            if cfg.fidelity.k_max_cap == 0 {
                return Err(err(key, "must be at least 1"));
            }
        }

        "dqn.learning_rate" => cfg.dqn.learning_rate = positive(key, parse_f64(key, v)?)?,
        "dqn.gamma" => cfg.dqn.gamma = in_range(key, parse_f64(key, v)?, 0.0, 1.0)?,
        "dqn.buffer_capacity" => {
            cfg.dqn.buffer_capacity = parse_int(key, v)?;
            if cfg.dqn.buffer_capacity == 0 {
                return Err(err(key, "must be positive"));
            }
        }
        "dqn.batch_size" => {
            cfg.dqn.batch_size = parse_int(key, v)?;
            if cfg.dqn.batch_size == 0 {
                return Err(err(key, "must be positive"));
            }
        }
        "dqn.eps_start" => cfg.dqn.epsilon.start = in_range(key, parse_f64(key, v)?, 0.0, 1.0)?,
        "dqn.eps_end" => cfg.dqn.epsilon.end = in_range(key, parse_f64(key, v)?, 0.0, 1.0)?,
        "dqn.eps_steps" => cfg.dqn.epsilon.total_steps = parse_int(key, v)?,
        "dqn.target_sync_interval" => cfg.dqn.target_sync_interval = parse_int(key, v)?,

        "llm.enabled" => {
            if parse_bool(key, v)? {
                llm(cfg);
            } else {
                cfg.llm = None;
            }
        }
        "llm.endpoint_url" => llm(cfg).endpoint_url = v.to_string(),
        "llm.model_name" => llm(cfg).model_name = v.to_string(),
        "llm.timeout_ms" => {
            let t: u64 = parse_int(key, v)?;
            if t == 0 {
                return Err(err(key, "must be positive"));
            }
            llm(cfg).timeout_ms = t;
        }
        "llm.max_retries" => llm(cfg).max_retries = parse_int(key, v)?,
        "llm.api_key_env_var" => llm(cfg).api_key_env_var = v.to_string(),

        _ => return apply_table_key(cfg, key, v),
    }
    Ok(())
}

fn apply_table_key(cfg: &mut SimConfig, key: &str, v: &str) -> Result<(), CliError> {
    if let Some(cat) = key.strip_prefix("fidelity.utility.") {
        let category: TaskCategory = cat.parse().map_err(|_| unknown(key))?;
        let row = parse_list(key, v)?;
        if row.len() != 5 {
            return Err(err(key, format!("expected 5 values, got {}", row.len())));
        }
        for (slot, x) in cfg.fidelity.matrix.u[category.ordinal()].iter_mut().zip(row) {
            *slot = in_range(key, x, 0.0, 1.0)?;
        }
        return Ok(());
    }
    if let Some(name) = key.strip_prefix("fidelity.payload.") {
        let modality: Modality = name.parse().map_err(|_| unknown(key))?;
        let bytes: u64 = parse_int(key, v)?;
        return cfg.fidelity.payloads.set(modality, bytes).map_err(|e| err(key, e));
    }
    Err(unknown(key))
}

fn unknown(key: &str) -> CliError {
    CliError::Config(format!("unknown key `{key}`"))
}

/// Splits `key=value`, ignoring blank lines and `#` comments.
fn parse_line(line: &str, origin: &str) -> Result<Option<(String, String)>, CliError> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("{origin}: expected key=value, got `{line}`")))?;
    Ok(Some((k.trim().to_string(), v.trim().to_string())))
}

pub fn parse_assignments(text: &str, origin: &str) -> Result<Vec<(String, String)>, CliError> {
    text.lines()
        .enumerate()
        .filter_map(|(i, l)| parse_line(l, &format!("{origin}:{}", i + 1)).transpose())
        .collect()
}

/// Resolves a configuration from an optional file plus ordered overrides.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<SimConfig, CliError> {
    let mut cfg = SimConfig::default();
    if let Some(path) = path {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        for (k, v) in parse_assignments(&text, &path.display().to_string())? {
            apply(&mut cfg, &k, &v)?;
        }
    }
    for (k, v) in overrides {
        apply(&mut cfg, k, v)?;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Every resolved key in a fixed order; feeding these back through
/// [`apply`] reproduces the configuration exactly.
pub fn snapshot(cfg: &SimConfig) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| out.push((k.to_string(), v));
    put("sim.n_users", cfg.n_users.to_string());
    put("sim.n_steps", cfg.n_steps.to_string());
    put("sim.outage_prob", cfg.outage_prob.to_string());
    put("sim.methods", join(cfg.methods.iter().map(|m| m.name())));
    put("sim.theta", cfg.theta.to_string());
    put("sim.thresholds", join(&cfg.thresholds));
    put("sim.master_seed", cfg.master_seed.to_string());
    put("sim.train", cfg.train.to_string());
    put("sim.latency_tolerance_ms", cfg.latency_tolerance_ms.to_string());
    put("channel.bandwidth_hz", cfg.channel.bandwidth_hz.to_string());
    put("channel.slot_ms", cfg.channel.slot_ms.to_string());
    put("channel.snr_clamp_db_min", cfg.channel.snr_clamp_db.0.to_string());
    put("channel.snr_clamp_db_max", cfg.channel.snr_clamp_db.1.to_string());
    put("channel.mean_snr_low_db", cfg.channel.mean_snr_range_db.0.to_string());
    put("channel.mean_snr_high_db", cfg.channel.mean_snr_range_db.1.to_string());
    put("fidelity.alpha", cfg.fidelity.matrix.alpha.to_string());
    put("fidelity.lambda", cfg.fidelity.lambda.to_string());
    put("fidelity.k_max_cap", cfg.fidelity.k_max_cap.to_string());
    for c in TaskCategory::ALL {
        put(&format!("fidelity.utility.{c}"), join(cfg.fidelity.matrix.u[c.ordinal()]));
    }
    for m in Modality::ALL {
        put(&format!("fidelity.payload.{m}"), cfg.fidelity.payloads.bytes(m).to_string());
    }
    put("dqn.learning_rate", cfg.dqn.learning_rate.to_string());
    put("dqn.gamma", cfg.dqn.gamma.to_string());
    put("dqn.buffer_capacity", cfg.dqn.buffer_capacity.to_string());
    put("dqn.batch_size", cfg.dqn.batch_size.to_string());
    put("dqn.eps_start", cfg.dqn.epsilon.start.to_string());
    put("dqn.eps_end", cfg.dqn.epsilon.end.to_string());
    put("dqn.eps_steps", cfg.dqn.epsilon.total_steps.to_string());
    put("dqn.target_sync_interval", cfg.dqn.target_sync_interval.to_string());
    put("llm.enabled", cfg.llm.is_some().to_string());
    if let Some(llm) = &cfg.llm {
        put("llm.endpoint_url", llm.endpoint_url.clone());
        put("llm.model_name", llm.model_name.clone());
        put("llm.timeout_ms", llm.timeout_ms.to_string());
        put("llm.max_retries", llm.max_retries.to_string());
        put("llm.api_key_env_var", llm.api_key_env_var.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn empty_file_gives_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.cfg");
        fs::write(&path, "").unwrap();
        let cfg = parse_config(Some(&path), &[]).unwrap();
        assert_eq!(cfg.n_users, 10);
        assert_eq!(cfg.n_steps, 250);
        assert_eq!(cfg.channel.bandwidth_hz, 1.4e6);
        assert_eq!(cfg.outage_prob, 0.2);
        assert_eq!(cfg, SimConfig::default());
    }

    #[test]
    fn range_error_names_key() {
        let e = parse_config(None, &[kv("sim.outage_prob", "1.5")]).unwrap_err();
        assert!(matches!(&e, CliError::Config(m) if m.contains("sim.outage_prob")), "{e}");
    }

    #[test]
    fn overrides_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        fs::write(&path, "# steps\nsim.n_steps=100\n").unwrap();
        assert_eq!(parse_config(Some(&path), &[]).unwrap().n_steps, 100);
        let cfg = parse_config(Some(&path), &[kv("sim.n_steps", "250")]).unwrap();
        assert_eq!(cfg.n_steps, 250);
    }

    #[test]
    fn unknown_and_missing() {
        let e = parse_config(None, &[kv("sim.bogus", "1")]).unwrap_err();
        assert!(e.to_string().contains("sim.bogus"));
        let e = parse_config(None, &[kv("fidelity.payload.lidar", "1")]).unwrap_err();
        assert!(e.to_string().contains("fidelity.payload.lidar"));
        assert!(parse_config(Some(Path::new("/nonexistent/x.cfg")), &[]).is_err());
        assert!(parse_assignments("no equals sign", "t").is_err());
    }

    #[test]
    fn table_keys() {
        let cfg = parse_config(
            None,
            &[kv("fidelity.utility.scenery", "0.1,0.2,0.3,0.4,0.5"), kv("fidelity.payload.depth", "1234")],
        )
        .unwrap();
        assert_eq!(cfg.fidelity.matrix.u[0], [0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(cfg.fidelity.payloads.bytes(Modality::Depth), 1234);
        assert!(parse_config(None, &[kv("fidelity.utility.scenery", "0.1,0.2")]).is_err());
        assert!(parse_config(None, &[kv("fidelity.payload.text", "0")]).is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = SimConfig { master_seed: 77, theta: 0.3, ..Default::default() };
        cfg.channel.mean_snr_range_db = (1.25, 19.5);
        cfg.llm = Some(LlmGateConfig::default());
        let pairs = snapshot(&cfg);
        let back = parse_config(None, &pairs).unwrap();
        assert_eq!(back, cfg);
        let keys: Vec<_> = pairs.iter().map(|(k, _)| k.clone()).collect();
        let mut dedup = keys.clone();
        dedup.dedup();
        assert_eq!(keys, dedup);
    }
}
