//! Scalar Kalman filter over a stream of reward observations.
//!
//! The latent quantity is the expected reward of one prompt under the current
//! policy. The state transition is the identity, so the prediction step only
//! inflates the variance by the process noise `q`. A fresh filter is started
//! for every group of rollouts; nothing persists across prompts.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Process and measurement noise variances, in reward units squared.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    q: f64,
    r: f64,
}

impl FilterParams {
    pub const DEFAULT_Q: f64 = 1e-5;
    pub const DEFAULT_R: f64 = 1e-2;

    pub fn new(q: f64, r: f64) -> Result<Self> {
        if !(q >= 0.0 && q.is_finite()) {
            return invalid(format!("process noise q must be finite and >= 0, got {q}"));
        }
        if !(r > 0.0 && r.is_finite()) {
            return invalid(format!(
                "measurement noise r must be finite and > 0, got {r}"
            ));
        }
        Ok(Self { q, r })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn r(&self) -> f64 {
        self.r
    }
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            q: Self::DEFAULT_Q,
            r: Self::DEFAULT_R,
        }
    }
}

/// Posterior mean and variance of the latent baseline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub x_hat: f64,
    pub p: f64,
}

impl FilterState {
    pub const DEFAULT_PRIOR_MEAN: f64 = 0.0;
    pub const DEFAULT_PRIOR_VAR: f64 = 1e3;

    /// Starting state. A large `prior_var` makes the first gain close to one,
    /// so the arbitrary prior mean is quickly forgotten.
    pub fn new(prior_mean: f64, prior_var: f64) -> Result<Self> {
        if !prior_var.is_finite() || prior_var < 0.0 {
            return invalid(format!(
                "prior variance must be finite and >= 0, got {prior_var}"
            ));
        }
        if !prior_mean.is_finite() {
            return invalid(format!("prior mean must be finite, got {prior_mean}"));
        }
        Ok(Self {
            x_hat: prior_mean,
            p: prior_var,
        })
    }
}

impl Default for FilterState {
    fn default() -> Self {
        Self {
            x_hat: Self::DEFAULT_PRIOR_MEAN,
            p: Self::DEFAULT_PRIOR_VAR,
        }
    }
}

/// Prediction-stage values before an observation is folded in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prior {
    pub x: f64,
    pub p: f64,
}

/// One full predict/update cycle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterStep {
    pub x_prior: f64,
    pub p_prior: f64,
    pub gain: f64,
    pub posterior: FilterState,
}

pub fn init_filter(prior_mean: f64, prior_var: f64) -> Result<FilterState> {
    FilterState::new(prior_mean, prior_var)
}

pub fn predict(state: &FilterState, params: &FilterParams) -> Prior {
    Prior {
        x: state.x_hat,
        p: state.p + params.q,
    }
}

/// `K = P / (P + r)`, `x = x + K (obs - x)`, `P = (1 - K) P`.
///
/// `1 - K` is evaluated as `r / (P + r)`: when `P >> r` the subtraction would
/// cancel most significant digits and break `P_post == K r`.
pub fn update(x_prior: f64, p_prior: f64, observation: f64, params: &FilterParams) -> FilterStep {
    let denom = p_prior + params.r;
    let gain = p_prior / denom;
    let complement = params.r / denom;
    FilterStep {
        x_prior,
        p_prior,
        gain,
        posterior: FilterState {
            x_hat: x_prior + gain * (observation - x_prior),
            p: complement * p_prior,
        },
    }
}

/// Runs predict+update over `observations` in order, starting from `init`.
pub fn filter_group(
    observations: &[f64],
    params: &FilterParams,
    init: FilterState,
) -> Result<Vec<FilterStep>> {
    if observations.is_empty() {
        return invalid("cannot filter an empty reward group");
    }
    let mut state = init;
    Ok(observations
        .iter()
        .map(|&obs| {
            let prior = predict(&state, params);
            let step = update(prior.x, prior.p, obs, params);
            state = step.posterior;
            step
        })
        .collect())
}
