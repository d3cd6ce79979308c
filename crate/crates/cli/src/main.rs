mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use qholo_core::config::{parse_config, preset, ExperimentConfig, KEYS, PRESETS};
use qholo_core::QholoError;

use crate::commands::Outcome;

const DEFAULT_OUT: &str = "qholo-out";

#[derive(Parser, Debug)]
#[command(name = "qholo", version, about = "Bucket-detected holography with entangled photon pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (`key = value` lines)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Built-in configuration to start from
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,

    /// Output directory [default: config `out_dir`, then $QHOLO_OUT, then `qholo-out`]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Seed for event sampling and randomized checks
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Number of sampled events (accepts `1e6`)
    #[arg(long, global = true, value_name = "U64", value_parser = parse_count)]
    n: Option<u64>,

    /// Worker threads; results do not depend on it
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Multiplies every oracle-check tolerance
    #[arg(long, global = true, value_name = "F")]
    tolerance_scale: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Bucket hologram of the configured scene
    Simulate,
    /// Direct, scattered and interference terms of the hologram
    Decompose,
    /// Record the hologram and back-propagate it to the candidate depths
    Reconstruct,
    /// Sample photon-pair events and compare their histogram with the hologram
    Montecarlo,
    /// Compare fast paths with brute-force references
    OracleCheck,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Decompose => "decompose",
            Command::Reconstruct => "reconstruct",
            Command::Montecarlo => "montecarlo",
            Command::OracleCheck => "oracle-check",
        }
    }
}

fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(format!("`{s}` is not a nonnegative integer"))
    }
}

fn help_footer() -> String {
    let defaults = ExperimentConfig::default().to_canonical();
    format!(
        "Presets: {}\n\nConfiguration keys: {}\n\nDefaults (preset fig1):\n{}\n\nExit status: 0 success, 2 invalid input, 3 oracle tolerance failure, 1 other errors.",
        PRESETS.join(", "),
        KEYS.join(", "),
        defaults
            .lines()
            .map(|l| format!("  {l}"))
            .collect::<Vec<_>>()
            .join("\n")
    )
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Other(String),
}

impl From<QholoError> for Failure {
    fn from(e: QholoError) -> Self {
        match e {
            QholoError::Io(_) | QholoError::Format(_) => Failure::Other(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut text = String::new();
    if let Some(name) = &cli.preset {
        if !PRESETS.contains(&name.as_str()) {
            return Err(Failure::Invalid(format!(
                "unknown preset `{name}` (expected one of {})",
                PRESETS.join(", ")
            )));
        }
    }
    if let Some(path) = &cli.config {
        text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))?;
    }
    let mut cfg = match &cli.preset {
        Some(name) if cli.config.is_none() => preset(name)?,
        Some(name) => {
            // the flag selects the base; the file still overrides individual keys
            let has_preset = text
                .lines()
                .any(|l| l.split('#').next().unwrap_or("").trim_start().starts_with("preset"));
            if has_preset {
                return Err(Failure::Invalid("--preset conflicts with a `preset` line in the config file".into()));
            }
            let shifted = format!("preset = {name}\n{text}");
            parse_config(&shifted).map_err(|e| match e {
                QholoError::ConfigSyntax { line, column, message } => Failure::Invalid(
                    QholoError::ConfigSyntax {
                        line: line - 1,
                        column,
                        message,
                    }
                    .to_string(),
                ),
                other => other.into(),
            })?
        }
        None => parse_config(&text)?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.n {
        cfg.mc_n = n;
    }
    if let Some(t) = cli.tolerance_scale {
        cfg.tolerance_scale = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(o) = &cli.out {
        return o.clone();
    }
    if let Some(o) = &cfg.out_dir {
        return PathBuf::from(o);
    }
    std::env::var_os("QHOLO_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn write_outcome(dir: &Path, cmd: Command, cfg: &ExperimentConfig, outcome: &Outcome, threads: usize) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Other(format!("cannot create {}: {e}", dir.display())))?;
    for (name, bytes) in &outcome.artifacts {
        std::fs::write(dir.join(name), bytes).map_err(|e| Failure::Other(format!("cannot write {name}: {e}")))?;
    }
    let m = manifest::build(cmd.name(), cfg, outcome, threads);
    std::fs::write(dir.join("manifest.json"), m).map_err(|e| Failure::Other(format!("cannot write manifest: {e}")))?;
    Ok(())
}

fn main() -> ExitCode {
    let footer = help_footer();
    let matches = Cli::command().after_long_help(footer).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };

    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(Failure::Invalid(m)) => {
            eprintln!("qholo: {m}");
            return ExitCode::from(2);
        }
        Err(Failure::Other(m)) => {
            eprintln!("qholo: {m}");
            return ExitCode::from(1);
        }
    };
    let dir = out_dir(&cli, &cfg);

    let threads = cli.threads.unwrap_or_else(rayon::current_num_threads);
    if threads == 0 {
        eprintln!("qholo: --threads must be at least 1");
        return ExitCode::from(2);
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("qholo: cannot start worker threads: {e}");
            return ExitCode::from(1);
        }
    };
    let result = pool.install(|| commands::run(cli.command, &cfg));

    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            let code = commands::error_code(&e);
            let msg = e.to_string();
            let exit = match Failure::from(e) {
                Failure::Invalid(_) => 2,
                Failure::Other(_) => 1,
            };
            eprintln!("qholo: {msg}");
            let _ = write_outcome(&dir, cli.command, &cfg, &Outcome::failed(code, &msg), threads);
            return ExitCode::from(exit);
        }
    };
    if let Err(Failure::Other(m) | Failure::Invalid(m)) = write_outcome(&dir, cli.command, &cfg, &outcome, threads) {
        eprintln!("qholo: {m}");
        return ExitCode::from(1);
    }
    for line in &outcome.summary {
        println!("{line}");
    }
    if outcome.tolerance_failed {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    }
}
