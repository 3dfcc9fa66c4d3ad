use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ufrnn::doorworld::DoorType;
use ufrnn::Error;

mod analyze;
mod eval;
mod gen_data;
mod gradcheck;
mod train;

#[derive(Debug, Parser)]
#[command(name = "ufrnn", version, about = "Uncertainty-driven foresight RNN on a toy door world")]
struct Cli {
    /// Worker threads for training. 1 keeps the scheduling trivially reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate scripted demonstrations in dataset format.
    GenData(GenDataArgs),
    /// Train a model; writes the config snapshot, checkpoints and metrics.csv.
    Train(TrainArgs),
    /// Roll out checkpoints in the door world and tabulate successes.
    Eval(EvalArgs),
    /// Export analysis CSVs from a checkpoint or an episode log.
    Analyze {
        #[command(subcommand)]
        kind: AnalyzeCommand,
    },
    /// Compare BPTT gradients with finite differences on a tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Dataset directory (manifest.json plus one CSV per demonstration).
    #[arg(long)]
    out: PathBuf,
    /// Demonstrations per door type.
    #[arg(long, default_value_t = 5)]
    per_type: usize,
    #[arg(long, value_delimiter = ',', default_value = "push,pull,slide")]
    types: Vec<DoorType>,
    /// Seeds door offsets and waypoint jitter.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// `key = value` lines; unknown keys are rejected.
    #[arg(long)]
    config: PathBuf,
    /// Dataset directory written by gen-data.
    #[arg(long)]
    data: PathBuf,
    /// Run directory for config.txt, metrics.csv and checkpoints/.
    #[arg(long)]
    out: PathBuf,
    /// Print a progress line every N epochs (0 = only checkpoints).
    #[arg(long, default_value_t = 10)]
    log_every: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Checkpoint header (`.json`) or base path.
    #[arg(long, conflicts_with = "checkpoint_dir")]
    checkpoint: Option<PathBuf>,
    /// Evaluate every `epoch_*.json` checkpoint in this directory.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Trials per door type.
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Hold the door shut over steps FROM:TO (inclusive).
    #[arg(long)]
    interference: Option<ufrnn::doorworld::InterferenceSchedule>,
    /// Output directory for success.csv and the episode logs.
    #[arg(long)]
    out: PathBuf,
    /// Seeds door offsets, start poses and foresight noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = ufrnn::doorworld::DEFAULT_MAX_STEPS)]
    max_steps: usize,
    /// Keep stepping after the door opens.
    #[arg(long)]
    full_episodes: bool,
    /// Drive the door world with the scripted controller instead of a model.
    #[arg(long, hide = true, conflicts_with_all = ["checkpoint", "checkpoint_dir"])]
    oracle: bool,
}

#[derive(Debug, Subcommand)]
enum AnalyzeCommand {
    /// Finite-time Lyapunov exponent at every step of a teacher-forced demonstration.
    Lyapunov {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Trajectory id; defaults to the first one in the manifest.
        #[arg(long)]
        trajectory: Option<String>,
        /// Closed-loop horizon in steps.
        #[arg(long = "t", default_value_t = 10)]
        horizon: usize,
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
        #[arg(long, default_value_t = 10)]
        directions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project offline and online shared-layer trajectories onto one PCA fit.
    Pca {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Offline trajectory ids (default: all).
        #[arg(long, value_delimiter = ',')]
        trajectories: Vec<String>,
        /// Episode logs (`.jsonl`) to project as online trajectories.
        #[arg(long)]
        episode: Vec<PathBuf>,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-step predicted variance and foresight sigma of an episode.
    Variance {
        #[arg(long)]
        episode: PathBuf,
        /// Supplies modality names; without it two modalities are named joint and feat.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GradcheckSize {
    Tiny,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    All,
    Ufrnn,
    Sh,
    ShNoise,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "tiny")]
    size: GradcheckSize,
    /// Seeds weights, inputs, initial state and perturbations.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "all")]
    variant: VariantArg,
    /// Scale the analytic gradient before comparing (negative control).
    #[arg(long, hide = true, default_value_t = 1.0)]
    gradient_scale: f64,
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    if cli.jobs == 0 {
        return Err(Error::InvalidArgument("--jobs must be at least 1".into()));
    }
    match cli.command {
        Command::GenData(a) => gen_data::run(&a),
        Command::Train(a) => train::run(&a, cli.jobs),
        Command::Eval(a) => eval::run(&a),
        Command::Analyze { kind } => analyze::run(&kind),
        Command::Gradcheck(a) => gradcheck::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
