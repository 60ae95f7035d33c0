use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use krpo::config::ExperimentConfig;
use krpo::experiment::{cmd_compare, cmd_run, cmd_sweep};
use krpo::stats::Pairing;
use krpo::{selftest, EstimatorKind};

#[derive(Parser)]
#[command(
    name = "krpo",
    version,
    about = "Kalman-filtered advantage estimation lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration.
    Run(RunArgs),
    /// Train every combination of the config's sweep.* axes.
    Sweep(RunArgs),
    /// Compare two sets of runs matched by seed.
    Compare(CompareArgs),
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Kalman,
    GroupMean,
    Fixed,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    #[arg(long = "fixed-b")]
    fixed_b: Option<f64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PairingArg {
    Question,
    Seed,
}

#[derive(Args)]
struct CompareArgs {
    /// Baseline runs (run directories or report.json files).
    #[arg(long = "a", num_args = 1.., required = true)]
    a: Vec<PathBuf>,
    /// Runs tested for improvement over the baseline.
    #[arg(long = "b", num_args = 1.., required = true)]
    b: Vec<PathBuf>,
    #[arg(long, default_value = "comparison")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "question")]
    pairing: PairingArg,
    #[arg(long)]
    quiet: bool,
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            ExperimentConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(e) = args.estimator {
        cfg.train.estimator = match e {
            EstimatorArg::Kalman => EstimatorKind::Kalman,
            EstimatorArg::GroupMean => EstimatorKind::GroupMean,
            EstimatorArg::Fixed => EstimatorKind::Fixed,
        };
    }
    if let Some(b) = args.fixed_b {
        cfg.train.fixed_b = b;
    }
    cfg.train.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run(args) => {
            let cfg = load_config(&args)?;
            let every = (cfg.train.steps / 10).max(1);
            let quiet = args.quiet;
            let a = cmd_run(&cfg, |m| {
                if !quiet && m.step % every == 0 {
                    eprintln!(
                        "step {:>5}  mean_reward {:.4}  kl {:.4}  loss {:.4}",
                        m.step, m.mean_reward, m.mean_kl, m.loss
                    );
                }
            })
            .map_err(|e| e.to_string())?;
            if !quiet {
                println!(
                    "{}: final smoothed reward {:.4}, eval accuracy {:.4}",
                    a.dir.display(),
                    a.report.final_smoothed_reward,
                    a.report.evaluation.accuracy
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep(args) => {
            let cfg = load_config(&args)?;
            let quiet = args.quiet;
            let outcome = cmd_sweep(&cfg, |point, result| {
                if !quiet {
                    match result {
                        Ok(a) => eprintln!(
                            "[{:03}] done: final smoothed reward {:.4}",
                            point.index, a.report.final_smoothed_reward
                        ),
                        Err(e) => eprintln!("[{:03}] failed: {e}", point.index),
                    }
                }
            })
            .map_err(|e| e.to_string())?;
            if !quiet {
                println!(
                    "{} runs, index at {}",
                    outcome.runs.len(),
                    outcome.index_csv.display()
                );
            }
            if outcome.failures() > 0 {
                return Err(format!(
                    "{} of {} sweep runs failed",
                    outcome.failures(),
                    outcome.runs.len()
                ));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare(args) => {
            let pairing = match args.pairing {
                PairingArg::Question => Pairing::Question,
                PairingArg::Seed => Pairing::Seed,
            };
            let c = cmd_compare(&args.a, &args.b, pairing, &args.out).map_err(|e| e.to_string())?;
            if !args.quiet {
                print!("{}", c.comparison.to_csv());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            let mut failed = 0;
            for c in &checks {
                println!(
                    "{} {} {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
                failed += usize::from(!c.passed);
            }
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
