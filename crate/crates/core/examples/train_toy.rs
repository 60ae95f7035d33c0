//! Train the toy policy with one estimator and write the run artifacts.
//!
//! ```bash
//! cargo run --release -p krpo --example train_toy -- group_mean easy 300
//! ```

use krpo::config::ExperimentConfig;
use krpo::experiment::cmd_run;

fn main() -> krpo::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = ExperimentConfig::default();
    cfg.train.estimator = args
        .first()
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(cfg.train.estimator);
    cfg.train.tier = args
        .get(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(cfg.train.tier);
    cfg.train.steps = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(300);
    cfg.output_dir = std::env::temp_dir().join("krpo-train-toy");

    let every = (cfg.train.steps / 10).max(1);
    let artifacts = cmd_run(&cfg, |m| {
        if m.step % every == 0 {
            println!(
                "step {:>4}  mean reward {:.4}  kl {:.5}  grad norm {:.4}",
                m.step, m.mean_reward, m.mean_kl, m.grad_norm
            );
        }
    })?;
    let report = &artifacts.report;
    println!(
        "final smoothed reward {:.4} (window {})",
        report.final_smoothed_reward, report.smoothing_window
    );
    println!("held-out accuracy {:.4}", report.evaluation.accuracy);
    println!("artifacts in {}", artifacts.dir.display());
    Ok(())
}
