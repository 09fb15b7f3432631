use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use conflow_core::lab::{run, ConfigOverrides, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(
    name = "conflow",
    version,
    about = "Numerical experiments for the truncated conformal flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a perturbed ground state and record H, Q, E.
    Simulate(Common),
    /// Linearized spectra, frequencies and ladder checks on a p-grid.
    Spectrum(Common),
    /// Scan Q^2 - H over random and geometric states.
    Inequality(Common),
    /// Orthogonal decomposition of a perturbed ground state.
    Decompose(Common),
    /// Ensemble of tracked perturbed ground states.
    DriftStudy(Common),
    /// Closed-form sums, palindromic identity, Hessian remainder and oracles.
    VerifyIdentities(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Plain-text `key = value` file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Truncation.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p0: Option<f64>,
    /// h^1 size of the initial perturbation.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "rel-tol")]
    rel_tol: Option<f64>,
}

impl Command {
    fn split(self) -> (ExperimentKind, Common) {
        match self {
            Command::Simulate(c) => (ExperimentKind::Simulate, c),
            Command::Spectrum(c) => (ExperimentKind::Spectrum, c),
            Command::Inequality(c) => (ExperimentKind::Inequality, c),
            Command::Decompose(c) => (ExperimentKind::Decompose, c),
            Command::DriftStudy(c) => (ExperimentKind::DriftStudy, c),
            Command::VerifyIdentities(c) => (ExperimentKind::VerifyIdentities, c),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (kind, common) = Cli::parse().command.split();
    let overrides = ConfigOverrides {
        n: common.n,
        p0: common.p0,
        delta: common.delta,
        seed: common.seed,
        t_end: common.t_end,
        out: common.out,
        rel_tol: common.rel_tol,
    };
    let cfg = match ExperimentConfig::resolve(kind, common.config.as_deref(), &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    log::info!("running {kind} into {}", cfg.out.display());
    match run(&cfg) {
        Ok(outcome) => {
            println!("{}", outcome.to_json());
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: closed-form checks failed; see report");
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
