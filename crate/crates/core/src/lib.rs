//! Kalman-filtered advantage estimation for critic-free policy gradients.
//!
//! The crate bundles a scalar Kalman filter baseline, group-mean and fixed
//! baselines, a toy arithmetic task with a rule-based reward, a small
//! autoregressive softmax policy with exact gradients, and a clipped-surrogate
//! training loop with experiment, sweep and comparison tooling.

pub mod advantage;
pub mod config;
pub mod error;
pub mod experiment;
pub mod kalman;
pub mod optim;
pub mod policy;
pub mod rng;
pub mod selftest;
pub mod stats;
pub mod svg;
pub mod tasks;
pub mod trainer;

pub use advantage::{AdvantageVector, Estimator, EstimatorConfig, RewardGroup};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use kalman::{FilterParams, FilterState, FilterStep};
pub use policy::{Policy, Rollout};
pub use tasks::{Prompt, Tier};
pub use trainer::{EstimatorKind, RunReport, StepMetrics, TrainConfig, Trainer};
