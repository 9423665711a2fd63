//! Command-line front end: argument parsing, subcommands and run manifests.

pub mod commands;
pub mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] gridcrowd::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// 2 for bad input, 3 for failures at run time.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_input_error() => 2,
            CliError::Core(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "gridcrowd", version, about = "Grid crowd simulation driven by navigation potential fields")]
pub struct Cli {
    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Simulation config JSON (fields of SimConfig; missing fields take defaults).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (output file for `convert`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write trajectories, summary and manifest.
    Simulate(SimulateArgs),
    /// Compare a simulated trajectory log with a recorded one.
    Evaluate(EvaluateArgs),
    /// Run one simulation per data-driven period and report ADE for each.
    SweepTd(SweepArgs),
    /// Re-simulate to a step and write one agent's field matrices.
    ExportFields(ExportArgs),
    /// Rewrite a whitespace separated trajectory file into canonical column order.
    Convert(ConvertArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Baseline,
    DataDriven,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Scene JSON: bounds, cell_size, obstacle rectangles.
    #[arg(long)]
    pub scene: PathBuf,
    /// Recorded trajectories, `frame<TAB>agent_id<TAB>x<TAB>y` in meters.
    #[arg(long)]
    pub agents: PathBuf,
    /// Seconds between consecutive frame numbers in the agents file.
    #[arg(long, default_value_t = 0.4)]
    pub frame_interval: f64,
    #[arg(long, value_enum, default_value_t = Mode::Baseline)]
    pub mode: Mode,
    /// Trend JSONL replayed in data-driven mode.
    #[arg(long)]
    pub trends: Option<PathBuf>,
    /// Exchange directory for an external predictor in data-driven mode.
    #[arg(long)]
    pub lockstep_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 30_000)]
    pub lockstep_timeout_ms: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Simulated trajectory CSV.
    #[arg(long)]
    pub sim: PathBuf,
    /// Recorded trajectory CSV (same format).
    #[arg(long)]
    pub real: PathBuf,
    /// Scene JSON, for the heatmap grid.
    #[arg(long)]
    pub scene: PathBuf,
    /// ADE horizon in steps; defaults to the config's t_p.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Compare over every common step instead of a fixed horizon.
    #[arg(long, conflicts_with = "horizon")]
    pub full: bool,
    #[arg(long, default_value_t = 3)]
    pub levels: u32,
    /// Write both heatmaps as CSV grids.
    #[arg(long)]
    pub heatmaps: bool,
    /// Write kernel density curves of travel distance and mean speed.
    #[arg(long)]
    pub kde: bool,
    /// KDE bandwidth; Silverman's rule when omitted.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long, default_value_t = 256)]
    pub kde_points: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Periods to try: comma list and/or inclusive ranges, e.g. `1..12` or `1,6,12`.
    #[arg(long)]
    pub td_values: String,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub step: u64,
    #[arg(long)]
    pub agent: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ConvertArgs {
    /// Input file, whitespace separated.
    #[arg(long)]
    pub input: PathBuf,
    /// Role of each input column: `frame`, `id`, `x`, `y`, or `_` to skip.
    #[arg(long, default_value = "frame,id,x,y")]
    pub cols: String,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&cli, a).map(|_| ()),
        Command::Evaluate(a) => commands::evaluate(&cli, a).map(|_| ()),
        Command::SweepTd(a) => commands::sweep_td(&cli, a).map(|_| ()),
        Command::ExportFields(a) => commands::export_fields(&cli, a).map(|_| ()),
        Command::Convert(a) => commands::convert(&cli, a),
    }
}

/// Parses arguments, runs, and maps errors onto exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
