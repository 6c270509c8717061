//! `nbcl` command-line front end.

mod diagnose;
mod fail;
mod fit;
mod manifest;
mod reserve;
mod simulate;
mod table;

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nbcl::predictive::BootstrapModel;
use nbcl::triangle::{parse_triangle_with, ParseOptions, RunOffTriangle};

use crate::fail::InputFile;

#[derive(Debug, Parser)]
#[command(name = "nbcl", version, about = "Negative binomial chain-ladder reserving")]
struct Cli {
    /// Worker threads for bootstrap and simulation replicates [default: all cores].
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Round non-integer triangle entries instead of rejecting them.
    #[arg(long, global = true)]
    round_amounts: bool,

    /// Print the JSON report to stdout instead of the human table.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a triangle and report parameters and dispersion.
    Fit(fit::Args),
    /// Bootstrap predictive intervals for the outstanding counts.
    Reserve(reserve::Args),
    /// Run a coverage study on synthetic triangles.
    Simulate(simulate::Args),
    /// Write Pearson residuals and the dispersion profile to CSV.
    Diagnose(diagnose::Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Nb,
    Poisson,
    Odp,
}

impl FamilyArg {
    pub fn model(self) -> BootstrapModel {
        match self {
            FamilyArg::Nb => BootstrapModel::NegBin,
            FamilyArg::Poisson => BootstrapModel::Poisson,
            FamilyArg::Odp => BootstrapModel::Odp,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyArg::Nb => "nb",
            FamilyArg::Poisson => "poisson",
            FamilyArg::Odp => "odp",
        }
    }
}

/// Settings shared by every subcommand.
pub struct Global {
    pub round_amounts: bool,
    pub json: bool,
    pub threads: usize,
}

pub fn read_triangle(path: &Path, global: &Global) -> Result<RunOffTriangle> {
    let file = File::open(path).map_err(|source| InputFile {
        path: path.to_path_buf(),
        source,
    })?;
    let opts = ParseOptions {
        round_amounts: global.round_amounts,
    };
    let t = parse_triangle_with(file, opts).with_context(|| format!("reading {}", path.display()))?;
    Ok(t)
}

pub fn create_out_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads.unwrap_or_else(rayon::current_num_threads);
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(fail::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting the thread pool")?;
    }
    let global = Global {
        round_amounts: cli.round_amounts,
        json: cli.json,
        threads,
    };
    match cli.command {
        Command::Fit(args) => fit::run(args, &global),
        Command::Reserve(args) => reserve::run(args, &global),
        Command::Simulate(args) => simulate::run(args, &global),
        Command::Diagnose(args) => diagnose::run(args, &global),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => fail::report(&err),
    }
}
