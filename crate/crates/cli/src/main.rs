use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod report;

use commands::CliError;

#[derive(Parser)]
#[command(name = "massynth", version, about = "Decentralized PCTL synthesis for multi-agent MDP teams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Mode {
    Existential,
    Universal,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Dependency {
    /// Agents depend on each other when they declare a common handshake.
    SharedAction,
    /// Additionally require that the sharers can meet within the horizon.
    SharedActionWithMeeting,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and every agent formula.
    Validate { model: PathBuf },
    /// Print dependency clusters and product size estimates.
    Cluster {
        model: PathBuf,
        #[arg(long, value_enum, default_value = "shared-action")]
        dependency: Dependency,
        /// Step horizon for the meeting check.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Synthesize local policies and write a policy file.
    Synthesize {
        model: PathBuf,
        #[arg(long, value_enum, default_value = "existential")]
        mode: Mode,
        #[arg(long, value_enum, default_value = "shared-action")]
        dependency: Dependency,
        #[arg(long)]
        horizon: Option<usize>,
        /// Convergence threshold for unbounded until.
        #[arg(long, default_value_t = 1e-8)]
        epsilon: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_iters: u64,
        /// Team policies examined per cluster before giving up.
        #[arg(long, default_value_t = 100_000)]
        max_policies: usize,
        /// Worker threads for clusters (0: one per core).
        #[arg(long, env = "MASSYNTH_JOBS", default_value_t = 0)]
        jobs: usize,
        /// Require an executable action at every product state.
        #[arg(long)]
        strict: bool,
        /// Keep product states unreachable from the initial state.
        #[arg(long)]
        no_prune: bool,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Estimate formula probabilities under a synthesized policy.
    Simulate {
        model: PathBuf,
        policy: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1_000)]
        max_steps: usize,
        /// Print the first sampled path of each estimate.
        #[arg(long)]
        trace: bool,
    },
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Validate { model } => commands::validate(&model),
        Command::Cluster {
            model,
            dependency,
            horizon,
        } => commands::cluster(&model, dependency, horizon),
        Command::Synthesize {
            model,
            mode,
            dependency,
            horizon,
            epsilon,
            max_iters,
            max_policies,
            jobs,
            strict,
            no_prune,
            out,
        } => commands::synthesize(
            &model,
            commands::SynthesizeArgs {
                mode,
                dependency,
                horizon,
                epsilon,
                max_iters,
                max_policies,
                jobs,
                strict,
                prune: !no_prune,
                out,
            },
        ),
        Command::Simulate {
            model,
            policy,
            trials,
            seed,
            max_steps,
            trace,
        } => commands::simulate(&model, &policy, trials, seed, max_steps, trace),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
