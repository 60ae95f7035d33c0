//! Per-rollout advantages for one group of rewards.
//!
//! Three baselines are available: a Kalman-filtered running baseline
//! normalized by the posterior standard deviation, the group mean normalized
//! by the population standard deviation, and a fixed constant with no
//! normalization.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kalman::{filter_group, FilterParams, FilterState};

pub const DEFAULT_EPS: f64 = 1e-8;

/// Rewards of the `n` rollouts sampled for one prompt, in sampling order.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardGroup(Vec<f64>);

impl RewardGroup {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("reward group must not be empty");
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return invalid(format!("reward {v} outside [0, 1]"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Mean summed in sorted order, so it does not depend on sample order.
    pub fn mean(&self) -> f64 {
        sorted_sum(self.0.iter().copied()) / self.0.len() as f64
    }

    /// True when every reward is identical.
    pub fn is_degenerate(&self) -> bool {
        self.0.iter().all(|&v| v == self.0[0])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdvantageVector(Vec<f64>);

impl AdvantageVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    Kalman {
        params: FilterParams,
        init: FilterState,
    },
    GroupMean,
    Fixed {
        b: f64,
    },
}

impl Estimator {
    /// Short name used in file names and CSV columns.
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Kalman { .. } => "kalman",
            Estimator::GroupMean => "group_mean",
            Estimator::Fixed { .. } => "fixed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub estimator: Estimator,
    pub eps: f64,
}

impl EstimatorConfig {
    pub fn new(estimator: Estimator, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return invalid(format!("numerical eps must be > 0, got {eps}"));
        }
        Ok(Self { estimator, eps })
    }

    pub fn compute(&self, group: &RewardGroup) -> Result<AdvantageVector> {
        match self.estimator {
            Estimator::Kalman { params, init } => kalman_advantage(group, &params, init, self.eps),
            Estimator::GroupMean => group_mean_advantage(group, self.eps),
            Estimator::Fixed { b } => fixed_baseline_advantage(group, b),
        }
    }
}

/// `A_i = (r_i - x_i) / (sqrt(P_i) + eps)` where `(x_i, P_i)` is the posterior
/// right after observing `r_i`. The filter starts from `init` on every call.
pub fn kalman_advantage(
    group: &RewardGroup,
    params: &FilterParams,
    init: FilterState,
    eps: f64,
) -> Result<AdvantageVector> {
    let steps = filter_group(group.values(), params, init)?;
    Ok(AdvantageVector(
        group
            .values()
            .iter()
            .zip(&steps)
            .map(|(&r, s)| (r - s.posterior.x_hat) / (s.posterior.p.sqrt() + eps))
            .collect(),
    ))
}

/// Group-mean baseline scaled by the population standard deviation.
/// A zero-variance group yields all-zero advantages.
pub fn group_mean_advantage(group: &RewardGroup, eps: f64) -> Result<AdvantageVector> {
    if group.is_empty() {
        return invalid("reward group must not be empty");
    }
    let n = group.len() as f64;
    let mean = group.mean();
    let var = sorted_sum(group.values().iter().map(|r| (r - mean).powi(2))) / n;
    let denom = var.sqrt() + eps;
    Ok(AdvantageVector(
        group.values().iter().map(|r| (r - mean) / denom).collect(),
    ))
}

fn sorted_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

pub fn fixed_baseline_advantage(group: &RewardGroup, b: f64) -> Result<AdvantageVector> {
    if group.is_empty() {
        return invalid("reward group must not be empty");
    }
    Ok(AdvantageVector(
        group.values().iter().map(|r| r - b).collect(),
    ))
}
