//! `phi4lab`: configuration, orchestration, persistence and plotting for
//! the finite-range decomposition, RG flow, predictor and Monte Carlo
//! layers of `phi4`.
//!
//! Exit codes: 0 success, 1 usage, 2 check failure, 3 numeric failure.
//! Errors are printed to stderr as a single JSON object.

pub mod commands;
pub mod config;
pub mod plot;
pub mod verify;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use commands::{CommandOutput, RunContext, CACHE_ENV};
use config::ExperimentConfig;

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CHECK: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// An error caused by the invocation or configuration rather than by the
/// computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "phi4lab", version, about = "Finite-size-scaling laboratory for the lattice |phi|^4 model")]
pub struct Cli {
    /// Experiment configuration (TOML, or JSON when the name ends in .json).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for the Monte Carlo and verification runs.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "K")]
    pub threads: Option<usize>,
    /// Allow lattices beyond the desk budget.
    #[arg(long, global = true)]
    pub override_budget: bool,
    /// Print the resolved configuration and exit.
    #[arg(long, value_name = "FORMAT", num_args = 0..=1, default_missing_value = "toml")]
    pub print_config: Option<ConfigFormat>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConfigFormat {
    Toml,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Finite-range decomposition of the torus covariance.
    Decompose,
    /// Critical mass and coupling flow.
    Flow,
    /// Finite-size-scaling predictions.
    Predict,
    /// Monte Carlo run and optional Binder scan.
    Mc,
    /// Oracle suite.
    Verify,
    /// Re-render charts from the CSV files of a run directory.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Decompose => "decompose",
            Self::Flow => "flow",
            Self::Predict => "predict",
            Self::Mc => "mc",
            Self::Verify => "verify",
            Self::Report => "report",
        }
    }
}

/// Maps an error to its exit code: configuration, validation and invocation
/// problems are usage errors, everything else is a numeric failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<toml::de::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<phi4::Error>() {
            use phi4::Error::*;
            return match e {
                InvalidParameter(_) | DimensionMismatch { .. } | OffGrid(_) | Budget { .. } | Unsupported(_) | BracketInvalid(_) => {
                    EXIT_USAGE
                }
                _ => EXIT_NUMERIC,
            };
        }
    }
    EXIT_NUMERIC
}

fn error_json(err: &anyhow::Error, code: i32) -> String {
    let kind = match code {
        EXIT_USAGE => "usage",
        EXIT_CHECK => "check_failure",
        _ => "numeric_failure",
    };
    let chain: Vec<String> = err.chain().map(ToString::to_string).collect();
    json!({ "error": { "kind": kind, "exit_code": code, "message": chain.join(": ") } }).to_string()
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Resolves the configuration: file (or defaults), then command-line
/// overrides, then validation.
pub fn resolve_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| UsageError(format!("{e:#}")))?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.output.dir = out.to_string_lossy().into_owned();
    }
    if let Some(seed) = cli.seed {
        config.mc.seed = seed;
        config.verify.seed = seed;
    }
    config.validate().map_err(|e| UsageError(format!("{e:#}")))?;
    Ok(config)
}

/// Runs one subcommand and writes `manifest.json` next to its payload.
pub fn execute(command: Command, ctx: &RunContext) -> anyhow::Result<CommandOutput> {
    std::fs::create_dir_all(&ctx.out)?;
    let started = unix_now();
    let output = match command {
        Command::Decompose => commands::cmd_decompose(ctx),
        Command::Flow => commands::cmd_flow(ctx),
        Command::Predict => commands::cmd_predict(ctx),
        Command::Mc => commands::cmd_mc(ctx),
        Command::Verify => commands::cmd_verify(ctx),
        Command::Report => commands::cmd_report(ctx),
    }?;
    let manifest = json!({
        "command": command.name(),
        "config_hash": ctx.config.hash(),
        "code_version": env!("CARGO_PKG_VERSION"),
        "started_unix": started,
        "finished_unix": unix_now(),
        "override_budget": ctx.override_budget,
        "files": output.files,
        "check_failure": output.failure,
        "config": ctx.config,
    });
    std::fs::write(ctx.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(output)
}

fn run_parsed(cli: Cli) -> anyhow::Result<i32> {
    let config = resolve_config(&cli)?;
    if let Some(format) = cli.print_config {
        let text = match format {
            ConfigFormat::Toml => config.to_toml()?,
            ConfigFormat::Json => config.to_json()? + "\n",
        };
        print!("{text}");
        return Ok(EXIT_SUCCESS);
    }
    let Some(command) = cli.command else {
        return Err(UsageError("a subcommand is required (decompose, flow, predict, mc, verify, report)".into()).into());
    };
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(UsageError("--threads must be positive".into()).into());
        }
        // A second initialisation in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    let ctx = RunContext {
        out: PathBuf::from(&config.output.dir),
        config,
        override_budget: cli.override_budget,
        cache_dir: std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from),
    };
    let output = execute(command, &ctx)?;
    match output.failure {
        Some(reason) => {
            eprintln!("{}", json!({ "error": { "kind": "check_failure", "exit_code": EXIT_CHECK, "message": reason } }));
            Ok(EXIT_CHECK)
        }
        None => Ok(EXIT_SUCCESS),
    }
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_SUCCESS,
                _ => EXIT_USAGE,
            };
        }
    };
    match run_parsed(cli) {
        Ok(code) => code,
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("{}", error_json(&err, code));
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classification() {
        let usage = anyhow::Error::new(UsageError("bad".into()));
        assert_eq!(exit_code(&usage), EXIT_USAGE);
        let budget = anyhow::Error::new(phi4::Error::Budget { sites: 10, limit: 1 });
        assert_eq!(exit_code(&budget.context("running")), EXIT_USAGE);
        let numeric = anyhow::Error::new(phi4::Error::NonConvergent("x".into()));
        assert_eq!(exit_code(&numeric), EXIT_NUMERIC);
        let text = error_json(&numeric, EXIT_NUMERIC);
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["error"]["exit_code"], 3);
        assert_eq!(parsed["error"]["kind"], "numeric_failure");
    }

    #[test]
    fn overrides_apply_before_validation() {
        let cli = Cli::try_parse_from(["phi4lab", "--seed", "9", "--out", "somewhere", "mc"]).unwrap();
        let config = resolve_config(&cli).unwrap();
        assert_eq!(config.mc.seed, 9);
        assert_eq!(config.verify.seed, 9);
        assert_eq!(config.output.dir, "somewhere");
        assert_eq!(cli.command, Some(Command::Mc));
    }

    #[test]
    fn parse_errors_are_usage_errors() {
        assert_eq!(run_from_args(["phi4lab", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run_from_args(["phi4lab", "--threads", "many", "mc"]), EXIT_USAGE);
        assert_eq!(run_from_args(["phi4lab"]), EXIT_USAGE);
        assert_eq!(run_from_args(["phi4lab", "--help"]), EXIT_SUCCESS);
    }
}
