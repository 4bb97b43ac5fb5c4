use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use semikin::cli::{self, Command};
use semikin::config::RunConfig;

/// Semiclassical mode superposition for the 2D kinetic equation with a
/// nonlocal cubic nonlinearity.
#[derive(Parser)]
#[command(name = "semikin", version, about)]
struct Args {
    #[command(subcommand)]
    command: Cmd,

    /// Run-configuration file (INI-style sections); defaults reproduce the
    /// plasma-relaxation example when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override a config value as section.key=value (repeatable).
    #[arg(long = "override", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Expansion coefficients k_n (closed form vs quadrature) for both eps values.
    Table,
    /// Mass relaxation sigma(t) with the ODE-oracle column.
    Sigma,
    /// The x2 = 0 section of the reconstructed field at the output times.
    Field,
    /// Variational solutions W/Z per branch and axis with skew products.
    Germ,
    /// ALE and nonlocal residuals at probe points, plus the mass transport table.
    Residual,
    /// Standalone mode solutions: germ-expressed moments vs the EE mass.
    Modes,
    /// Invariant suites; exit code 4 if any suite fails.
    Check,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = match args.config {
        Some(path) => match RunConfig::from_file(&path) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
        },
        None => RunConfig::default(),
    };
    for spec in &args.overrides {
        if let Err(e) = cfg.apply_override(spec) {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    }
    if let Some(dir) = args.out {
        cfg.output.dir = dir;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    let command = match args.command {
        Cmd::Table => Command::Table,
        Cmd::Sigma => Command::Sigma,
        Cmd::Field => Command::Field,
        Cmd::Germ => Command::Germ,
        Cmd::Residual => Command::Residual,
        Cmd::Modes => Command::Modes,
        Cmd::Check => Command::Check,
    };
    match cli::run(command, &cfg) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
