//! `whitney`: moduli of smoothness, polynomial approximation and inequality checks from the command line.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::to_value;
use whitney_core::verifier::Suite;
use whitney_core::Exponent;

use commands::Envelope;
use config::{Format, RunConfig};
use error::CliResult;

#[derive(Parser)]
#[command(name = "whitney", version, about = "Mixed moduli of smoothness, best polynomial approximation and Whitney-type inequality checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// One of modulus-sup, modulus-mean, total-omega, total-w, difference.
    Compute { operation: Option<String> },
    /// One of best, taylor, constant, piecewise.
    Approx { operation: Option<String> },
    /// Run a verification suite; exits 1 if a hard check fails.
    Verify,
    /// List the shipped test functions.
    Corpus,
}

#[derive(Args)]
struct Flags {
    /// TOML run configuration; flags override its keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Sample points per axis.
    #[arg(long, global = true, value_delimiter = ',', value_name = "N[,N...]")]
    grid: Option<Vec<usize>>,
    /// Step samples per axis.
    #[arg(long, global = true, value_name = "N")]
    hsamples: Option<usize>,
    /// Exponent: a positive number, a fraction like 1/2, or inf.
    #[arg(long, global = true, value_name = "VALUE|inf")]
    p: Option<Exponent>,
    #[arg(long, global = true, value_delimiter = ',', value_name = "N[,N...]")]
    r: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',', value_name = "F[,F...]", allow_hyphen_values = true)]
    t: Option<Vec<f64>>,
    /// Box bounds a1,b1,a2,b2,...
    #[arg(long = "box", global = true, value_delimiter = ',', value_name = "a,b[,a,b...]", allow_hyphen_values = true)]
    bounds: Option<Vec<f64>>,
    #[arg(long, global = true, value_name = "NAME")]
    suite: Option<Suite>,
    /// Corpus function name.
    #[arg(long = "fn", global = true, value_name = "NAME")]
    function: Option<String>,
    /// Smoothness tag filter for `corpus` and `verify`.
    #[arg(long, global = true)]
    tag: Option<String>,
    /// Cells per axis for `approx piecewise`.
    #[arg(long, global = true, value_delimiter = ',', value_name = "N[,N...]")]
    parts: Option<Vec<usize>>,
}

impl Flags {
    fn as_config(&self) -> RunConfig {
        RunConfig {
            out: self.out.clone(),
            format: self.format,
            seed: self.seed,
            jobs: self.jobs,
            grid: self.grid.clone(),
            h_samples: self.hsamples,
            p: self.p,
            r: self.r.clone(),
            t: self.t.clone(),
            bounds: self.bounds.clone(),
            suite: self.suite,
            function: self.function.clone(),
            tag: self.tag.clone(),
            parts: self.parts.clone(),
            ..Default::default()
        }
    }
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    let file = match &cli.flags.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let (name, operation) = match &cli.command {
        Command::Compute { operation } => ("compute", operation.clone()),
        Command::Approx { operation } => ("approx", operation.clone()),
        Command::Verify => ("verify", None),
        Command::Corpus => ("corpus", None),
    };
    let mut flags = cli.flags.as_config();
    flags.operation = operation;
    let merged = file.clone().overridden_by(flags);
    let resolved = merged.resolve(name)?;
    let out = merged.out.as_deref();
    let policy = &merged.tolerance;
    match cli.command {
        Command::Compute { .. } => {
            let body = commands::compute(&resolved)?;
            let env = to_value(Envelope::new(&resolved, policy, body)).expect("report serializes");
            output::write_value(resolved.format, out, &env)?;
        }
        Command::Approx { .. } => {
            let body = commands::approx(&resolved)?;
            let env = to_value(Envelope::new(&resolved, policy, body)).expect("report serializes");
            output::write_value(resolved.format, out, &env)?;
        }
        Command::Verify => {
            let settings = commands::verify_settings(&resolved, &merged)?;
            let report = commands::verify(&resolved, &settings);
            let bytes = match resolved.format {
                Format::Json => output::json_bytes(&Envelope::new(&resolved, policy, &report)),
                Format::Csv => output::reports_csv(&report.reports)?,
            };
            output::emit(out, &bytes)?;
            let s = &report.summary;
            eprintln!(
                "{}: {} checks, {} pass, {} vacuous, {} fail, {} violation, {} unstable, {} not applicable",
                report.suite, s.total, s.pass, s.vacuous, s.fail, s.violation, s.unstable, s.not_applicable
            );
            if !report.passed {
                eprintln!("{} hard check(s) failed", s.hard_failures);
                return Ok(ExitCode::from(1));
            }
        }
        Command::Corpus => {
            let entries = commands::corpus_listing(resolved.tag.as_deref());
            let bytes = match merged.format {
                None => output::corpus_text(&entries),
                Some(Format::Json) => output::json_bytes(&Envelope::new(&resolved, policy, serde_json::json!({ "entries": entries }))),
                Some(Format::Csv) => output::corpus_csv(&entries)?,
            };
            output::emit(out, &bytes)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
