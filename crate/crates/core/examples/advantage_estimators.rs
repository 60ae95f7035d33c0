//! Compare the three advantage estimators on a handful of reward groups.
//!
//! ```bash
//! cargo run -p krpo --example advantage_estimators
//! ```

use krpo::advantage::{Estimator, EstimatorConfig, RewardGroup, DEFAULT_EPS};
use krpo::kalman::{FilterParams, FilterState};

fn main() -> krpo::Result<()> {
    let estimators = [
        Estimator::Kalman {
            params: FilterParams::default(),
            init: FilterState::default(),
        },
        Estimator::GroupMean,
        Estimator::Fixed { b: 0.5 },
    ];
    let groups = [
        vec![1.0, 0.0],
        vec![1.0, 0.5, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
        vec![0.5, 0.5, 0.5, 0.5],
        vec![1.0, 1.0, 0.0, 1.0, 0.5, 0.0, 1.0, 0.0],
    ];
    for values in groups {
        println!("rewards {values:?}");
        let group = RewardGroup::new(values)?;
        for estimator in &estimators {
            let adv = EstimatorConfig::new(*estimator, DEFAULT_EPS)?.compute(&group)?;
            let shown: Vec<String> = adv.values().iter().map(|a| format!("{a:+.4}")).collect();
            println!("  {:>10}: [{}]", estimator.name(), shown.join(", "));
        }
    }
    Ok(())
}
