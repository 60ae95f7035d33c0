//! Step a scalar Kalman filter through one reward group and print each
//! prior, gain and posterior alongside the resulting advantage.
//!
//! ```bash
//! cargo run -p krpo --example kalman_baseline -- 1 0 0.5 1 1 0
//! ```

use krpo::advantage::{kalman_advantage, RewardGroup, DEFAULT_EPS};
use krpo::kalman::{filter_group, FilterParams, FilterState};

fn main() -> krpo::Result<()> {
    let mut rewards: Vec<f64> = std::env::args()
        .skip(1)
        .filter_map(|s| s.parse().ok())
        .collect();
    if rewards.is_empty() {
        rewards = vec![1.0, 0.0, 0.5, 1.0, 1.0, 0.0];
    }
    let params = FilterParams::default();
    let init = FilterState::default();
    let group = RewardGroup::new(rewards.clone())?;
    let steps = filter_group(&rewards, &params, init)?;
    let adv = kalman_advantage(&group, &params, init, DEFAULT_EPS)?;

    println!(
        "q = {:e}, r = {:e}, prior = ({}, {})",
        params.q(),
        params.r(),
        init.x_hat,
        init.p
    );
    println!(
        "{:>3} {:>6} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "i", "reward", "p_prior", "gain", "x_hat", "p", "advantage"
    );
    for (i, ((s, r), a)) in steps.iter().zip(&rewards).zip(adv.values()).enumerate() {
        println!(
            "{:>3} {:>6} {:>12.6e} {:>12.8} {:>12.8} {:>12.6e} {:>12.6}",
            i, r, s.p_prior, s.gain, s.posterior.x_hat, s.posterior.p, a
        );
    }
    println!("group mean {:.8}", group.mean());
    Ok(())
}
