use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kgchain_cli::{run, Experiment, ExperimentConfig, RunError, RunOptions};

#[derive(Parser)]
#[command(name = "kgchain", about = "Disordered Klein-Gordon chain experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; replaces `model.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Eigensystems of independent disorder draws.
    Spectrum(RunArgs),
    /// Disorder-averaged eigenfunction correlator against distance.
    Correlator(RunArgs),
    /// Smallest level spacing distribution.
    Minami(RunArgs),
    /// Small-denominator tail and its bound.
    Denominator(RunArgs),
    /// Exact and Markov-chain samplers against Gibbs identities.
    GibbsCheck(RunArgs),
    /// Mode-energy decorrelation over a grid of anharmonicities.
    Decorrelation(RunArgs),
    /// Variance of the integrated bond current.
    Current(RunArgs),
    /// Rescaled total current on the time grid t = lambda^-n tau.
    GreenKubo(RunArgs),
    /// Bond current from a two-temperature initial state.
    NoneqCurrent(RunArgs),
    /// Commutator-equation residuals and closed-form ledger check.
    ExpansionResidual(RunArgs),
    /// Tail and locality of the Z weights.
    ZStats(RunArgs),
    /// Width of a spreading local excitation.
    Wavepacket(RunArgs),
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the artifact version.
    Version,
}

fn fail(e: &RunError) -> ExitCode {
    let msg = serde_json::json!({"error": e.reason(), "detail": e.detail()});
    eprintln!("{msg}");
    ExitCode::from(e.exit_code())
}

fn execute(experiment: Experiment, args: RunArgs) -> ExitCode {
    let cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if cfg.experiment != experiment {
        return fail(&RunError::validation(format!(
            "config is for `{}`, not `{experiment}`",
            cfg.experiment
        )));
    }
    let opts = RunOptions {
        seed: args.seed,
        workers: args.workers,
        out_dir: args.out,
    };
    match run(cfg, &opts) {
        Ok(out) => {
            println!("{}", out.out_dir.join(kgchain_cli::record::RECORD_FILE).display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Version => {
            println!("kgchain {}", env!("CARGO_PKG_VERSION"));
            return ExitCode::SUCCESS;
        }
        Command::Validate { config } => {
            return match ExperimentConfig::load(&config).and_then(|c| c.validate().map(|_| c)) {
                Ok(c) => {
                    println!("ok: {} ({})", c.experiment, c.hash());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            };
        }
        Command::Spectrum(a) => (Experiment::Spectrum, a),
        Command::Correlator(a) => (Experiment::Correlator, a),
        Command::Minami(a) => (Experiment::Minami, a),
        Command::Denominator(a) => (Experiment::Denominator, a),
        Command::GibbsCheck(a) => (Experiment::GibbsCheck, a),
        Command::Decorrelation(a) => (Experiment::Decorrelation, a),
        Command::Current(a) => (Experiment::Current, a),
        Command::GreenKubo(a) => (Experiment::GreenKubo, a),
        Command::NoneqCurrent(a) => (Experiment::NoneqCurrent, a),
        Command::ExpansionResidual(a) => (Experiment::ExpansionResidual, a),
        Command::ZStats(a) => (Experiment::ZStats, a),
        Command::Wavepacket(a) => (Experiment::Wavepacket, a),
    };
    execute(experiment, args)
}
