use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use keyruin::commands::{self, Report};
use keyruin::{CliError, Command, LoadedConfig};

/// Outage, required budget and ultimate ruin of secret-key budgets.
#[derive(Debug, Parser)]
#[command(name = "keyruin", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Outage probability by slot and initial budget (solver and Monte Carlo).
    Outage(Args),
    /// Required initial budget and mean recharge latency per (tau, epsilon).
    Budget(Args),
    /// Ultimate ruin: Nyström solution, Monte Carlo and Lundberg bound.
    Ultimate(Args),
    /// Rate and net-usage moments.
    Moments(Args),
}

#[derive(Debug, clap::Args)]
struct Args {
    /// Experiment file, or one of the bundled names fig4, fig5, fig6.
    #[arg(long)]
    config: PathBuf,
    /// Output path; defaults to outputs.csv of the config, else standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides mc.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides mc.trials.
    #[arg(long)]
    trials: Option<u64>,
    /// Generic override, repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "fig4" => Some(include_str!("../configs/fig4.toml")),
        "fig5" => Some(include_str!("../configs/fig5.toml")),
        "fig6" => Some(include_str!("../configs/fig6.toml")),
        _ => None,
    }
}

fn load(args: &Args) -> Result<LoadedConfig, CliError> {
    let mut overrides = args.set.clone();
    overrides.extend(args.seed.map(|s| format!("mc.seed={s}")));
    overrides.extend(args.trials.map(|t| format!("mc.trials={t}")));
    let name = args.config.to_string_lossy();
    match bundled(&name) {
        Some(src) if !args.config.exists() => Ok(LoadedConfig::from_str(src, &format!("{name}.toml"), &overrides)?),
        _ => LoadedConfig::from_file(&args.config, &overrides),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io {
            path: p.to_owned(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

fn execute(command: Command, args: &Args) -> Result<Report, CliError> {
    let cfg = load(args)?;
    let report = commands::run(command, &cfg)?;
    if command == Command::Moments {
        write_output(None, &report.output)?;
        if let Some(p) = &args.out {
            write_output(Some(p), &report.output)?;
        }
    } else {
        let out = args.out.clone().or_else(|| cfg.config.outputs.csv.clone());
        write_output(out.as_deref(), &report.output)?;
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (command, args) = match &cli.verb {
        Verb::Outage(a) => (Command::Outage, a),
        Verb::Budget(a) => (Command::Budget, a),
        Verb::Ultimate(a) => (Command::Ultimate, a),
        Verb::Moments(a) => (Command::Moments, a),
    };
    match execute(command, args) {
        Ok(report) if report.diagnostics.is_empty() => ExitCode::SUCCESS,
        Ok(report) => {
            eprintln!("diagnostics:");
            for d in &report.diagnostics {
                eprintln!("  - {d}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
