use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semcom_cli::commands::{cmd_run, cmd_sweep, cmd_validate, default_out_dir};
use semcom_cli::config::parse_config;
use semcom_cli::CliError;

#[derive(Parser)]
#[command(name = "semcom", version, about = "Context-aware semantic communication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method and write per-step and summary tables.
    Run(Common),
    /// Run once per fidelity threshold and write retransmission overhead.
    Sweep(Common),
    /// Run the fast invariant checks.
    Validate {
        /// Q-network checkpoint to load instead of an in-memory round trip.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated method names.
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated fidelity thresholds.
    #[arg(long)]
    thresholds: Option<String>,
    /// `key=value` override; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{s}`")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        if let Some(seed) = self.seed {
            out.push(("sim.master_seed".into(), seed.to_string()));
        }
        if let Some(m) = &self.methods {
            out.push(("sim.methods".into(), m.clone()));
        }
        if let Some(t) = &self.thresholds {
            out.push(("sim.thresholds".into(), t.clone()));
        }
        Ok(out)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(default_out_dir)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = parse_config(args.config.as_deref(), &args.overrides()?)?;
            let out = args.out_dir();
            let manifest = cmd_run(&cfg, &out)?;
            println!("wrote {} files to {}", manifest.outputs.len(), out.display());
        }
        Command::Sweep(args) => {
            let cfg = parse_config(args.config.as_deref(), &args.overrides()?)?;
            let out = args.out_dir();
            cmd_sweep(&cfg, &cfg.thresholds, &out)?;
            println!("wrote {}", out.join("overhead.csv").display());
        }
        Command::Validate { checkpoint } => {
            let report = cmd_validate(checkpoint.as_deref());
            print!("{}", report.render());
            if !report.passed() {
                return Err(CliError::Validation);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
