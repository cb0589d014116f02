mod commands;
mod config;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "sgwarm", version, about = "Sparse-grid collocation sweeps with warm-started solves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every configured mode and write report and table files.
    Run(RunArgs),
    /// Merge reports over the same grid into plot-ready series.
    Compare(CompareArgs),
    /// Check measured iteration counts and costs against the a-priori bounds.
    CheckBounds(CheckArgs),
    /// Write the collocation point table.
    DumpGrid(GridArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        self != Format::Csv
    }

    pub fn csv(self) -> bool {
        self != Format::Json
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Comma-separated subset of zero, accelerated, nearest_neighbor.
    #[arg(long)]
    modes: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    format: Format,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(required = true, num_args = 1..)]
    reports: Vec<PathBuf>,
    /// Directory for `compare.csv`; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long)]
    report: PathBuf,
    /// Optional key/value file with `lebesgue_max_dim`, `lebesgue_max_level`, `lebesgue_samples`.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    /// Take dimension, weights and level from a run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    level: Option<usize>,
    /// Comma-separated anisotropy weights.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Compare(a) => commands::compare(a),
        Command::CheckBounds(a) => commands::check_bounds(a),
        Command::DumpGrid(a) => commands::dump_grid(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
