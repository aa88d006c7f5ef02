use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use equivcnp::lie::GroupTag;
use equivcnp::Error;

mod commands;
mod plot;

#[derive(Parser)]
#[command(name = "equivcnp", version, about = "Group equivariant conditional neural processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Debug)]
pub struct ConfigArgs {
    /// Experiment config (JSON). Defaults to the regress1d-desk preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from a named preset instead of a file.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Overrides the model group.
    #[arg(long)]
    pub group: Option<GroupTag>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Writes the evaluation tasks of a config as task dumps (and PGMs for images).
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_tasks: Option<usize>,
        /// Draw observation locations from [-4, 4] (1D only).
        #[arg(long)]
        extrapolation: bool,
    },
    /// Trains a model, writing checkpoint.bin and metrics.csv every epoch.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean and standard deviation of per-task log-likelihood.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n_tasks: Option<usize>,
        /// Also score the exact GP predictor on the same tasks.
        #[arg(long, value_parser = ["oracle"])]
        baseline: Option<String>,
        /// Evaluate on observations drawn from [-4, 4].
        #[arg(long)]
        extrapolation: bool,
        /// Directory for eval.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Completes one digit image: writes context, truth and mean PGMs.
    Complete {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Share of pixels observed, in (0, 1].
        #[arg(long, allow_hyphen_values = true)]
        fraction: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        digit: u8,
        /// Scale of the test transform; drawn from [0.15, 0.5] when omitted.
        #[arg(long)]
        scale: Option<f64>,
        /// Rotation in degrees; drawn from [-90, 90] when omitted.
        #[arg(long, allow_hyphen_values = true)]
        angle: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Runs the symmetry property suite; exits 1 if any check fails.
    CheckEquivariance {
        #[arg(long)]
        group: Option<GroupTag>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Renders a 1D task dump as SVG, or tiles a completion directory into one PGM.
    Plot {
        /// Task dump (.csv) or completion directory.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// 1D model whose predictive is drawn over the task.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

/// Failures mapped to exit codes: 1 for failed checks, 2 for bad input or
/// configuration, 3 for numerical breakdowns.
#[derive(Debug)]
pub enum Failure {
    Check(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData {
            cfg,
            out,
            n_tasks,
            extrapolation,
        } => commands::gen_data(&cfg, &out, n_tasks, extrapolation),
        Command::Train { cfg, out } => commands::train(&cfg, &out),
        Command::Eval {
            cfg,
            checkpoint,
            n_tasks,
            baseline,
            extrapolation,
            out,
        } => commands::eval(
            &cfg,
            &checkpoint,
            n_tasks,
            baseline.is_some(),
            extrapolation,
            out.as_deref(),
        ),
        Command::Complete {
            checkpoint,
            fraction,
            out,
            digit,
            scale,
            angle,
            seed,
        } => commands::complete(&checkpoint, fraction, &out, digit, scale, angle, seed),
        Command::CheckEquivariance { group, seed } => commands::check_equivariance(group, seed),
        Command::Plot {
            input,
            out,
            checkpoint,
        } => plot::plot(&input, &out, checkpoint.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("FAILED: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Numeric(_) => 3,
                _ => 2,
            })
        }
    }
}
