//! Kalman-filtered vs group-mean baselines on the normal tier, three seeds.
//!
//! ```bash
//! cargo run --release -p krpo --example estimator_comparison
//! ```

use krpo::stats::{compare_runs, Pairing};
use krpo::trainer::run;
use krpo::{EstimatorKind, Tier, TrainConfig};

fn main() -> krpo::Result<()> {
    let steps: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(500);
    let seeds = [42, 777, 1234];
    let mut summaries = Vec::new();
    for estimator in [EstimatorKind::GroupMean, EstimatorKind::Kalman] {
        let mut runs = Vec::new();
        for seed in seeds {
            let cfg = TrainConfig {
                estimator,
                seed,
                steps,
                tier: Tier::Normal,
                ..TrainConfig::default()
            };
            let report = run(&cfg)?;
            println!(
                "{estimator:>10} seed {seed:>4}: first {:.4}  final smoothed {:.4}  eval accuracy {:.4}",
                report.smoothed_rewards()[0],
                report.final_smoothed_reward,
                report.evaluation.accuracy
            );
            runs.push(report.summary());
        }
        summaries.push(runs);
    }
    let cmp = compare_runs(&summaries[0], &summaries[1], Pairing::Question)?;
    print!("{}", cmp.to_csv());
    println!(
        "mean final smoothed reward: group_mean {:.4}, kalman {:.4}",
        cmp.mean_final_reward_a, cmp.mean_final_reward_b
    );
    Ok(())
}
