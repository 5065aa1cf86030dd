//! `maxinv` command-line front end.
//!
//! Exit codes: 0 success, 1 infeasible simulation, 2 no certifying terminal
//! cost, 3 set iteration did not converge, 4 set not contractive, 5 solver
//! failure, 64 invalid input, 66 missing file or artifact.

mod commands;
mod problem;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maxinv::solvers::SdpObjective;

#[derive(Parser)]
#[command(name = "maxinv", version, about = "Maximal invariant terminal sets and certified terminal costs for linear MPC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Invariant set, triangulation, vertex controls and terminal cost.
    Pipeline(CommonArgs),
    /// Closed-loop MPC runs from the problem's initial states.
    Simulate(CommonArgs),
    /// Feasible-region grids of the MPC controller for several horizons.
    Region {
        #[command(flatten)]
        common: CommonArgs,
        /// Terminal ingredients: the LQR set with P∞, or the pipeline artifacts.
        #[arg(long, value_enum, default_value_t = TerminalChoice::Lqr)]
        terminal: TerminalChoice,
    },
    /// Infinite-horizon LQR solution.
    Dare(CommonArgs),
    /// Maximal invariant set of the closed loop under the LQR gain.
    LqrSet(CommonArgs),
}

#[derive(Args, Clone)]
pub struct CommonArgs {
    /// Problem file (JSON).
    problem: PathBuf,
    /// Contraction factor in (0, 1]; overrides the problem file.
    #[arg(long)]
    lambda: Option<f64>,
    /// Planning horizon(s); `region` accepts a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    horizon: Vec<usize>,
    /// Terminal-cost objective; overrides the problem file.
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Seed for certification sampling; overrides the problem file.
    #[arg(long)]
    seed: Option<u64>,
    /// Grid points per axis for `region`.
    #[arg(long, default_value_t = 41)]
    grid: usize,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Trace,
    Frob,
    Vertex,
}

impl From<ObjectiveArg> for SdpObjective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Trace => SdpObjective::Trace,
            ObjectiveArg::Frob => SdpObjective::DistanceToReference,
            ObjectiveArg::Vertex => SdpObjective::VertexWeighted,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum TerminalChoice {
    Lqr,
    Maximal,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] maxinv::Error),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("missing {}: run `maxinv pipeline` first", .0.display())]
    MissingArtifact(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingArtifact(path.to_path_buf())
        } else {
            CliError::Io { path: path.to_path_buf(), source }
        }
    }

    fn exit_code(&self) -> u8 {
        use maxinv::Error as E;
        match self {
            CliError::Core(e) => match e {
                E::InfeasibleTerminalCost => 2,
                E::NotConverged { .. } => 3,
                E::NotContractive { .. } => 4,
                E::DimensionMismatch(_) | E::InvalidInput(_) | E::NotCset => 64,
                _ => 5,
            },
            CliError::Validation(_) => 64,
            CliError::MissingArtifact(_) => 66,
            CliError::Io { .. } => 74,
            CliError::Infeasible(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MAXINV_LOG", "warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Pipeline(a) => commands::pipeline(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Region { common, terminal } => commands::region(common, *terminal),
        Command::Dare(a) => commands::dare(a),
        Command::LqrSet(a) => commands::lqr_set(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Core(maxinv::Error::InfeasibleTerminalCost)) {
                eprintln!("hint: rerun with a contraction factor below one, e.g. --lambda 0.99");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
