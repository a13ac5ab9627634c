mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Stochastic reaction-drift-diffusion runs and their reference solutions, written as CSV.
#[derive(Debug, Parser)]
#[command(name = "dlfpkmc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run realizations of an experiment file.
    Simulate(SimulateArgs),
    /// Evaluate a reference method for the two-molecule problem.
    Oracle(OracleArgs),
    /// Refine the two-molecule mesh and compare against the reference.
    Convergence(ConvergenceArgs),
    /// Time batches of growing size.
    Scaling(ScalingArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// TOML experiment file.
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub realizations: Option<u64>,
    /// Output directory; falls back to the file's `run.output_dir`, then `DLFPKMC_OUT`, then `.`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleMode {
    Analytic,
    Pde,
    FixedLattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StepperChoice {
    Cn,
    Tga,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub mode: OracleMode,
    /// zero, one-well, two-well or step.
    #[arg(long, default_value = "zero")]
    pub landscape: String,
    #[arg(long, default_value_t = 1.0)]
    pub length: f64,
    #[arg(long, default_value_t = 1.0)]
    pub diffusion: f64,
    #[arg(long, default_value_t = dlfpkmc::presets::TWO_MOLECULE_RADIUS)]
    pub radius: f64,
    /// Coarsest grid spacing; defaults to the reaction radius.
    #[arg(long)]
    pub dx: Option<f64>,
    /// Number of times the grid spacing is halved after the coarsest solve.
    #[arg(long, default_value_t = 0)]
    pub halvings: u32,
    #[arg(long, value_enum, default_value = "cn")]
    pub stepper: StepperChoice,
    #[arg(long, default_value_t = 1000)]
    pub realizations: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// End of the survival grid; defaults to ten mean reaction times.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergenceArgs {
    /// vzero, vcos or vstep.
    pub preset: String,
    #[arg(long, default_value_t = 3)]
    pub levels: u32,
    #[arg(long, default_value_t = 10_000)]
    pub realizations: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScalingArgs {
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256,512,1024")]
    pub n_list: Vec<usize>,
    #[arg(long, default_value_t = 40)]
    pub realizations: u64,
    #[arg(long, default_value_t = dlfpkmc::presets::SCALING_RADIUS)]
    pub radius: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also run the fixed-lattice baseline.
    #[arg(long)]
    pub lattice: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Rejected input; reported with exit code 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Convergence(a) => commands::convergence(a),
        Command::Scaling(a) => commands::scaling(a),
    };
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) if e.downcast_ref::<Invalid>().is_some() => {
            eprintln!("invalid input: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
