//! `crdsa`: experiment runner for the CRDSA / slotted ALOHA stability toolkit.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or usage,
//! 3 analysis infeasible or not applicable, 4 success table missing.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{FileConfig, Grid};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("success table {} not found; run `crdsa build-q` first", .0.display())]
    TableMissing(PathBuf),
    #[error(transparent)]
    Core(#[from] crdsa::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        use crdsa::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::TableMissing(_) => 4,
            CliError::Core(E::NotApplicable(_) | E::Singular(_)) => 3,
            CliError::Core(E::Io(_)) | CliError::Io(_) => 1,
            CliError::Core(_) => 2,
        }
    }

    /// Stable machine-readable tag printed before the message.
    fn reason(&self) -> &'static str {
        match self.code() {
            1 => "io",
            2 => "invalid-config",
            3 => "infeasible",
            _ => "table-missing",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "crdsa", version, about = "Stability, delay and first entry time analysis of CRDSA and slotted ALOHA")]
pub struct Cli {
    /// Flat key = value file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for reports and CSV files.
    #[arg(long, global = true, env = "CRDSA_OUT_DIR")]
    pub out_dir: Option<PathBuf>,

    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Crdsa,
    Sa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Critical,
    Saturation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalysisArg {
    MinDelay,
    FetCurve,
}

/// Channel parameters shared by the analysis commands.
#[derive(Debug, Clone, Default, Args)]
pub struct ChannelArgs {
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Number of users M.
    #[arg(short = 'm', long)]
    pub population: Option<usize>,
    /// Fresh transmission probability: per frame for CRDSA, per slot for SA.
    #[arg(long)]
    pub p0: Option<f64>,
    /// Retransmission probability, same time base as p0.
    #[arg(long)]
    pub pr: Option<f64>,
    /// Replicas per packet. Defaults to the table's.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Slots per frame. Defaults to the table's.
    #[arg(long)]
    pub slots: Option<usize>,
    /// SIC iteration cap. Defaults to the table's.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Success table file. Defaults to `<out-dir>/q-table.txt`.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// CRDSA throughput formula.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the CRDSA success table by simulation.
    BuildQ {
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        slots: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        tau_max: Option<usize>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Destination; `--table` and the config key `table` are honoured too.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, hide = true)]
        table: Option<PathBuf>,
    },
    /// Drift and throughput over every backlog.
    Drift(ChannelArgs),
    /// Equilibrium points and stability class.
    Equilibria(ChannelArgs),
    /// Little's-law delay at the operating point.
    Delay(ChannelArgs),
    /// Retransmission probability minimising delay.
    OptimizePr {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        pr_grid: Option<Grid>,
    },
    /// Largest population meeting a delay target.
    MaxM {
        #[command(flatten)]
        channel: ChannelArgs,
        /// Delay target, slots.
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        m_min: Option<usize>,
        #[arg(long)]
        m_max: Option<usize>,
        #[arg(long)]
        pr_grid: Option<Grid>,
        /// Also emit the (M, pr) points where the delay equals the target.
        #[arg(long)]
        locus: bool,
    },
    /// Largest fresh probability meeting a delay target.
    MaxP0 {
        #[command(flatten)]
        channel: ChannelArgs,
        /// Delay target, slots.
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        p0_grid: Option<Grid>,
        #[arg(long)]
        pr_grid: Option<Grid>,
        /// Also emit the (p0, pr) points where the delay equals the target.
        #[arg(long)]
        locus: bool,
    },
    /// Mean first entry time from every state below a boundary.
    Fet {
        #[command(flatten)]
        channel: ChannelArgs,
        /// Highest transient state. Overrides `--rule`.
        #[arg(long)]
        boundary: Option<usize>,
        #[arg(long, value_enum)]
        rule: Option<RuleArg>,
    },
    /// First entry time from an empty backlog over a pr sweep.
    FetCurve {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        pr_grid: Option<Grid>,
        #[arg(long, value_enum)]
        rule: Option<RuleArg>,
    },
    /// Closed-loop simulation checked against the analysis.
    Validate {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        runs: Option<usize>,
        /// Epochs per run.
        #[arg(long)]
        epochs: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Estimate the first entry time above this state and the transition
        /// matrix below it. Runs stop once they pass it.
        #[arg(long)]
        boundary: Option<usize>,
    },
    /// CRDSA against slotted ALOHA carrying the same traffic.
    Compare {
        /// CRDSA parameters; slotted ALOHA uses p0 / slots per frame.
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long, value_enum)]
        analysis: Option<AnalysisArg>,
        #[arg(long)]
        pr_grid: Option<Grid>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let workers = file.pick(cli.workers, "workers")?;
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let out_dir = file
        .pick(cli.out_dir.clone(), "out-dir")?
        .unwrap_or_else(|| PathBuf::from("out"));
    commands::dispatch(cli.command, &file, out_dir)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.reason());
            ExitCode::from(e.code())
        }
    }
}
