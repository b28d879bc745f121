//! Command-line front end: cost estimation, training, export, verification
//! and design-space exploration driven by a JSON project config.

pub mod commands;
pub mod config;
pub mod error;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::ProjectConfig;
pub use error::{CliError, EXIT_FAILURE, EXIT_IO};

#[derive(Debug, Parser)]
#[command(
    name = "logicforge",
    version,
    about = "Compile quantized sparse MLPs into truth-table netlists"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-layer and total LUT cost of the configured network.
    Cost(CostArgs),
    /// Train the configured network and write a checkpoint and metrics.
    Train(TrainArgs),
    /// Convert a checkpoint into Verilog and a netlist dump.
    Export(ExportArgs),
    /// Check a netlist dump against its checkpoint.
    Verify(VerifyArgs),
    /// Sweep widths, bitwidths and fan-ins and tabulate cost (and accuracy).
    Explore(ExploreArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CostArgs {
    #[command(flatten)]
    pub common: Common,
    /// Fail when the total exceeds this many LUTs.
    #[arg(long)]
    pub budget: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Overrides both the mask seed and the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegistersArg {
    Default,
    None,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub no_prune: bool,
    #[arg(long, value_enum)]
    pub registers: Option<RegistersArg>,
    /// One Verilog file per module.
    #[arg(long)]
    pub split_files: bool,
    /// Seed of the testbench vectors.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub netlist: Option<PathBuf>,
    /// Random samples to check (default 10000).
    #[arg(long, conflicts_with = "exhaustive")]
    pub samples: Option<usize>,
    /// Check every input vector.
    #[arg(long)]
    pub exhaustive: bool,
    /// Largest exhaustive input width in bits (default 24).
    #[arg(long)]
    pub bound_bits: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ExploreArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub budget: Option<u64>,
    /// Train every candidate for this many epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluate candidates on all cores.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Ran to completion but the result fails a check (budget, equivalence).
    Failure,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Failure => EXIT_FAILURE,
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Cost(a) => commands::cost::run(a, out),
        Command::Train(a) => commands::train::run(a, out),
        Command::Export(a) => commands::export::run(a, out),
        Command::Verify(a) => commands::verify::run(a, out),
        Command::Explore(a) => commands::explore::run(a, out, err),
    }
}

/// Runs the command line `args` (including the program name) and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_IO } else { 0 };
        }
    };
    match run(&cli, out, err) {
        Ok(o) => o.exit_code(),
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
