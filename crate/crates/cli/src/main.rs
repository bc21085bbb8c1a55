//! `purcell`: batch driver for the filter, readout, leakage and multiplex
//! pipelines.
//!
//! Exit codes: 0 success, 1 config error, 2 numerical or fit failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Failure;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "purcell", version, about = "Purcell-filter readout simulations driven by a TOML config")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter tuning curve and S21 spectra per bias point.
    Sweep(RunArgs),
    /// IQ histograms, error budgets and the assignment matrix.
    Readout(RunArgs),
    /// Planted-rate leakage benchmarks with both fitters.
    Leakage(RunArgs),
    /// Dual-band linewidth reports for the two filter variants.
    Multiplex(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed_override: Option<u64>,
}

const CONFIG_ERROR: u8 = 1;
const NUMERICAL_ERROR: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { CONFIG_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, args, run): (&str, RunArgs, fn(&RunConfig) -> Result<output::Bundle, Failure>) = match cli.command {
        Command::Sweep(a) => ("sweep", a, commands::sweep),
        Command::Readout(a) => ("readout", a, commands::readout),
        Command::Leakage(a) => ("leakage", a, commands::leakage),
        Command::Multiplex(a) => ("multiplex", a, commands::multiplex),
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let cfg = match RunConfig::from_toml(&text, args.seed_override) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let bundle = match run(&cfg) {
        Ok(b) => b,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            return ExitCode::from(CONFIG_ERROR);
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            return ExitCode::from(NUMERICAL_ERROR);
        }
    };
    if let Err(e) = bundle.write(&args.out, name, &args.config) {
        eprintln!("error: cannot write to {}: {e}", args.out.display());
        return ExitCode::from(CONFIG_ERROR);
    }
    if bundle.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in &bundle.failures {
            eprintln!("numerical failure: {f}");
        }
        ExitCode::from(NUMERICAL_ERROR)
    }
}
