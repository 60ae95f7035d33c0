//! Sweep the KL weight for the Kalman estimator and print the sweep index.
//!
//! ```bash
//! cargo run --release -p krpo --example sweep_kl_weight -- 200
//! ```

use krpo::config::ExperimentConfig;
use krpo::experiment::{cmd_sweep, sweep_plan};

fn main() -> krpo::Result<()> {
    let steps = std::env::args().nth(1).unwrap_or_else(|| "200".into());
    let text = format!(
        "# KL weight sweep\nsteps = {steps}\ntier = easy\nsweep.kl_weight = 0, 0.001, 0.01, 0.05\n"
    );
    let mut cfg = ExperimentConfig::parse(&text)?;
    cfg.output_dir = std::env::temp_dir().join("krpo-sweep-kl");
    println!("{} runs planned", sweep_plan(&cfg)?.len());
    let outcome = cmd_sweep(&cfg, |point, result| {
        if let Ok(a) = result {
            println!(
                "[{:03}] kl_weight {} -> final smoothed reward {:.4}",
                point.index, point.config.kl_weight, a.report.final_smoothed_reward
            );
        }
    })?;
    print!(
        "{}",
        std::fs::read_to_string(&outcome.index_csv)
            .map_err(|e| krpo::Error::Internal(e.to_string()))?
    );
    Ok(())
}
