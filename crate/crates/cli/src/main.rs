use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvsgd::config::ExperimentConfig;
use mvsgd::experiment::{cmd_benchmark, cmd_density, cmd_run, Outcome, Overrides};
use mvsgd::Error;

#[derive(Parser)]
#[command(name = "mvsgd", version, about = "SGD solver for separable McKean-Vlasov SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run SGD (repeated `repeat` times) and write per-run reports.
    Run(Common),
    /// Simulate the particle-system benchmark and cache it as CSV.
    Benchmark(Common),
    /// Compare the SGD and Monte Carlo densities at the horizon (convolution model).
    Density(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `sgd.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.directory`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Exit with status 4 if any run stops without reaching the tolerance.
    #[arg(long)]
    strict_tol: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, out_dir: self.out_dir.clone(), strict_tol: self.strict_tol }
    }
}

fn exit_for(outcome: Outcome) -> ExitCode {
    match outcome {
        Outcome::Success => ExitCode::SUCCESS,
        Outcome::Diverged => ExitCode::from(3),
        Outcome::TolNotReached => ExitCode::from(4),
    }
}

fn exit_for_error(err: &Error) -> ExitCode {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) | Error::MissingBenchmark => ExitCode::from(2),
        Error::SimulationDiverged { .. } => ExitCode::from(3),
        _ => ExitCode::from(1),
    }
}

fn execute(cli: &Cli) -> Result<ExitCode, Error> {
    let (Command::Run(common) | Command::Benchmark(common) | Command::Density(common)) = &cli.command;
    let cfg = ExperimentConfig::load(&common.config)?;
    let ov = common.overrides();
    match &cli.command {
        Command::Run(_) => {
            let summary = cmd_run(&cfg, &ov)?;
            let a = &summary.aggregate;
            for (i, r) in summary.reports.iter().enumerate() {
                let eps = r.final_epsilon().map_or("-".to_string(), |e| format!("{e:.4e}"));
                eprintln!(
                    "run {i}: seed {} {} after {} iterations, epsilon {eps}",
                    r.seed,
                    r.termination.label(),
                    r.iterations()
                );
            }
            eprintln!(
                "{} runs, {} reached tol, {} diverged, mean iterations {:.2}; output in {}",
                a.runs,
                a.tol_reached,
                a.diverged,
                a.mean_iterations,
                summary.out_dir.display()
            );
            Ok(exit_for(summary.outcome))
        }
        Command::Benchmark(_) => {
            let path = cmd_benchmark(&cfg, &ov)?;
            eprintln!("benchmark written to {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Density(_) => {
            let d = cmd_density(&cfg, &ov)?;
            let sup = d.sgd.iter().zip(&d.monte_carlo).map(|(s, m)| (s - m).abs()).fold(0.0, f64::max);
            eprintln!("density written to {}; sup difference {sup:.4e}", d.path.display());
            Ok(exit_for(d.outcome))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for_error(&e)
        }
    }
}
