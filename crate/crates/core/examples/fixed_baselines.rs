//! Train with fixed baselines b = 0, 0.5 and 1 next to the group-mean baseline.
//!
//! ```bash
//! cargo run --release -p krpo --example fixed_baselines -- 300
//! ```

use krpo::trainer::run;
use krpo::{EstimatorKind, Tier, TrainConfig};

fn main() -> krpo::Result<()> {
    let steps = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(300);
    let base = TrainConfig {
        steps,
        tier: Tier::Easy,
        ..TrainConfig::default()
    };
    let configs = [
        (
            "fixed b=0",
            TrainConfig {
                estimator: EstimatorKind::Fixed,
                fixed_b: 0.0,
                ..base.clone()
            },
        ),
        (
            "fixed b=0.5",
            TrainConfig {
                estimator: EstimatorKind::Fixed,
                fixed_b: 0.5,
                ..base.clone()
            },
        ),
        (
            "fixed b=1",
            TrainConfig {
                estimator: EstimatorKind::Fixed,
                fixed_b: 1.0,
                ..base.clone()
            },
        ),
        (
            "group_mean",
            TrainConfig {
                estimator: EstimatorKind::GroupMean,
                ..base.clone()
            },
        ),
    ];
    for (label, cfg) in configs {
        let report = run(&cfg)?;
        println!(
            "{label:>12}: final smoothed reward {:.4}, eval accuracy {:.4}",
            report.final_smoothed_reward, report.evaluation.accuracy
        );
    }
    Ok(())
}
