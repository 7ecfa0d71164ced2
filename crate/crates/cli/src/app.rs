//! Command-line front end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::compare::compare;
use crate::config::{load, ExperimentKind};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::run::run;

#[derive(Debug, Parser)]
#[command(name = "skewlab", version, about = "Experiments on volume-preserving skew products of the 3-torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the center fibration and check equivariance.
    Fibration(RunArgs),
    /// Lyapunov spectrum and center exponents of g and its inverse.
    Spectrum(RunArgs),
    /// Fiber conditionals, atom detection and the shift-symmetry check.
    Disintegrate(RunArgs),
    /// Covering functional across an orbit-length schedule.
    Covering(RunArgs),
    /// Random circle system with a contracting sink.
    Kifer(RunArgs),
    /// Every stage the config's kind calls for, in dependency order.
    Pipeline(RunArgs),
    /// Metric deltas between two runs of the same kind.
    Compare {
        left: PathBuf,
        right: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `section.key=value`, repeatable. Values are parsed as TOML.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

fn run_kind(args: &RunArgs, kind: Option<ExperimentKind>) -> Result<(), CliError> {
    let mut config = load(args.config.as_deref(), &args.overrides)?;
    if let Some(kind) = kind {
        config.kind = kind;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    let manifest = run(&config)?;
    println!("{}", config.output_dir.join(crate::manifest::MANIFEST_FILE).display());
    if !manifest.succeeded() {
        eprintln!("some optional stages failed; see the manifest");
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fibration(a) => run_kind(&a, Some(ExperimentKind::Fibration)),
        Command::Spectrum(a) => run_kind(&a, Some(ExperimentKind::Spectrum)),
        Command::Disintegrate(a) => run_kind(&a, Some(ExperimentKind::Disintegrate)),
        Command::Covering(a) => run_kind(&a, Some(ExperimentKind::Covering)),
        Command::Kifer(a) => run_kind(&a, Some(ExperimentKind::Kifer)),
        Command::Pipeline(a) => run_kind(&a, None),
        Command::Compare { left, right, out } => {
            let report = compare(&RunManifest::load(&left)?, &RunManifest::load(&right)?)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            match out {
                Some(path) => std::fs::write(&path, text).map_err(|e| CliError::io(&path, e)),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

/// Parses arguments and runs, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
