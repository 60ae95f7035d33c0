//! Experiment configuration in a flat `key = value` grammar.
//!
//! ```text
//! # comments start with '#'; blank lines are ignored
//! estimator = kalman
//! filter.q = 1e-5
//! sweep.kl_weight = 0, 0.001, 0.01, 0.05
//! ```
//!
//! Keys are dot-scoped, unknown keys are rejected, and every key not given
//! keeps its default. Sweep axes take comma-separated lists.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::Tier;
use crate::trainer::{EstimatorKind, KlSign, TrainConfig};

/// Lists of values to take the Cartesian product over. Empty axes are not
/// swept.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepAxes {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub kl_weight: Vec<f64>,
    pub group_size: Vec<usize>,
    pub seed: Vec<u64>,
    pub estimator: Vec<EstimatorKind>,
    pub fixed_b: Vec<f64>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
            && self.r.is_empty()
            && self.kl_weight.is_empty()
            && self.group_size.is_empty()
            && self.seed.is_empty()
            && self.estimator.is_empty()
            && self.fixed_b.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub output_dir: PathBuf,
    pub sweep: SweepAxes,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            output_dir: PathBuf::from("runs"),
            sweep: SweepAxes::default(),
        }
    }
}

fn parse_scalar<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("malformed value `{value}`: {e}"))
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{value}`")),
    }
}

fn parse_list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let items = value
        .split(',')
        .map(|s| parse_scalar(s.trim()))
        .collect::<std::result::Result<Vec<T>, String>>()?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

fn check(ok: bool, msg: &str) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

fn finite(x: f64) -> std::result::Result<f64, String> {
    check(x.is_finite(), "value must be finite").map(|_| x)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: line_no,
                    key: line.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value).map_err(|message| Error::Parse {
                line: line_no,
                key: key.to_string(),
                message,
            })?;
        }
        cfg.train.validate().map_err(|e| Error::Parse {
            line: 0,
            key: "<config>".into(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// Sets one key. Errors carry a message without position.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let t = &mut self.train;
        match key {
            "group_size" => {
                t.group_size = parse_scalar(value)?;
                check(t.group_size >= 1, "must be >= 1")
            }
            "batch_size" => {
                t.batch_size = parse_scalar(value)?;
                check(t.batch_size >= 1, "must be >= 1")
            }
            "learning_rate" => {
                t.learning_rate = finite(parse_scalar(value)?)?;
                check(t.learning_rate > 0.0, "must be > 0")
            }
            "clip_eps" => {
                t.clip_eps = parse_scalar(value)?;
                check(t.clip_eps > 0.0 && t.clip_eps < 1.0, "must be in (0, 1)")
            }
            "kl_weight" => {
                t.kl_weight = finite(parse_scalar(value)?)?;
                check(t.kl_weight >= 0.0, "must be >= 0")
            }
            "kl_sign" => {
                t.kl_sign = KlSign::from_str(value).map_err(|e| e.to_string())?;
                Ok(())
            }
            "filter.q" => {
                t.filter_q = finite(parse_scalar(value)?)?;
                check(t.filter_q >= 0.0, "must be >= 0")
            }
            "filter.r" => {
                t.filter_r = finite(parse_scalar(value)?)?;
                check(t.filter_r > 0.0, "must be > 0")
            }
            "filter.prior_mean" => {
                t.prior_mean = finite(parse_scalar(value)?)?;
                Ok(())
            }
            "filter.prior_var" => {
                t.prior_var = finite(parse_scalar(value)?)?;
                check(t.prior_var >= 0.0, "must be >= 0")
            }
            "numeric_eps" => {
                t.numeric_eps = finite(parse_scalar(value)?)?;
                check(t.numeric_eps > 0.0, "must be > 0")
            }
            "grad_clip_norm" => {
                t.grad_clip_norm = finite(parse_scalar(value)?)?;
                check(t.grad_clip_norm > 0.0, "must be > 0")
            }
            "steps" => {
                t.steps = parse_scalar(value)?;
                check(t.steps >= 1, "must be >= 1")
            }
            "seed" => {
                t.seed = parse_scalar(value)?;
                Ok(())
            }
            "estimator" => {
                t.estimator = EstimatorKind::from_str(value).map_err(|e| e.to_string())?;
                Ok(())
            }
            "fixed.b" => {
                t.fixed_b = finite(parse_scalar(value)?)?;
                Ok(())
            }
            "minibatch_size" => {
                t.minibatch_size = if value == "auto" {
                    None
                } else {
                    Some(parse_scalar(value)?)
                };
                check(t.minibatch_size != Some(0), "must be >= 1 or `auto`")
            }
            "shuffle_group_rewards" => {
                t.shuffle_group_rewards = parse_bool(value)?;
                Ok(())
            }
            "skip_degenerate_groups" => {
                t.skip_degenerate_groups = parse_bool(value)?;
                Ok(())
            }
            "policy.buckets" => {
                t.policy_buckets = parse_scalar(value)?;
                check(t.policy_buckets >= 1, "must be >= 1")
            }
            "policy.max_len" => {
                t.max_len = parse_scalar(value)?;
                check(t.max_len >= 1, "must be >= 1")
            }
            "tier" => {
                t.tier = Tier::from_str(value).map_err(|e| e.to_string())?;
                Ok(())
            }
            "prompt_count" => {
                t.prompt_count = parse_scalar(value)?;
                check(t.prompt_count >= 1, "must be >= 1")
            }
            "eval_count" => {
                t.eval_count = parse_scalar(value)?;
                check(t.eval_count >= 1, "must be >= 1")
            }
            "preset" => match value {
                "llm_scale" => {
                    t.learning_rate = TrainConfig::LLM_SCALE_LEARNING_RATE;
                    Ok(())
                }
                "toy" => {
                    t.learning_rate = TrainConfig::default().learning_rate;
                    Ok(())
                }
                _ => Err(format!(
                    "unknown preset `{value}` (expected toy or llm_scale)"
                )),
            },
            "output_dir" => {
                check(!value.is_empty(), "must not be empty")?;
                self.output_dir = PathBuf::from(value);
                Ok(())
            }
            "sweep.q" => {
                self.sweep.q = parse_list(value)?;
                check(
                    self.sweep.q.iter().all(|&q| q >= 0.0 && q.is_finite()),
                    "all values must be >= 0",
                )
            }
            "sweep.r" => {
                self.sweep.r = parse_list(value)?;
                check(
                    self.sweep.r.iter().all(|&r| r > 0.0 && r.is_finite()),
                    "all values must be > 0",
                )
            }
            "sweep.kl_weight" => {
                self.sweep.kl_weight = parse_list(value)?;
                check(
                    self.sweep
                        .kl_weight
                        .iter()
                        .all(|&a| a >= 0.0 && a.is_finite()),
                    "all values must be >= 0",
                )
            }
            "sweep.group_size" => {
                self.sweep.group_size = parse_list(value)?;
                check(
                    self.sweep.group_size.iter().all(|&n| n >= 1),
                    "all values must be >= 1",
                )
            }
            "sweep.seed" => {
                self.sweep.seed = parse_list(value)?;
                Ok(())
            }
            "sweep.estimator" => {
                self.sweep.estimator = parse_list(value)?;
                Ok(())
            }
            "sweep.fixed_b" => {
                self.sweep.fixed_b = parse_list(value)?;
                check(
                    self.sweep.fixed_b.iter().all(|b| b.is_finite()),
                    "all values must be finite",
                )
            }
            _ => Err("unknown key".into()),
        }
    }

    /// Renders every key, so the output reparses to an equal config.
    pub fn to_text(&self) -> String {
        fn join<T: ToString>(xs: &[T]) -> String {
            xs.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        }
        let t = &self.train;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        kv("group_size", t.group_size.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("learning_rate", t.learning_rate.to_string());
        kv("clip_eps", t.clip_eps.to_string());
        kv("kl_weight", t.kl_weight.to_string());
        kv("kl_sign", t.kl_sign.as_str().to_string());
        kv("filter.q", t.filter_q.to_string());
        kv("filter.r", t.filter_r.to_string());
        kv("filter.prior_mean", t.prior_mean.to_string());
        kv("filter.prior_var", t.prior_var.to_string());
        kv("numeric_eps", t.numeric_eps.to_string());
        kv("grad_clip_norm", t.grad_clip_norm.to_string());
        kv("steps", t.steps.to_string());
        kv("seed", t.seed.to_string());
        kv("estimator", t.estimator.to_string());
        kv("fixed.b", t.fixed_b.to_string());
        kv(
            "minibatch_size",
            t.minibatch_size.map_or("auto".into(), |m| m.to_string()),
        );
        kv("shuffle_group_rewards", t.shuffle_group_rewards.to_string());
        kv(
            "skip_degenerate_groups",
            t.skip_degenerate_groups.to_string(),
        );
        kv("policy.buckets", t.policy_buckets.to_string());
        kv("policy.max_len", t.max_len.to_string());
        kv("tier", t.tier.to_string());
        kv("prompt_count", t.prompt_count.to_string());
        kv("eval_count", t.eval_count.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        let s = &self.sweep;
        let axes: [(&str, String); 7] = [
            ("sweep.q", join(&s.q)),
            ("sweep.r", join(&s.r)),
            ("sweep.kl_weight", join(&s.kl_weight)),
            ("sweep.group_size", join(&s.group_size)),
            ("sweep.seed", join(&s.seed)),
            ("sweep.estimator", join(&s.estimator)),
            ("sweep.fixed_b", join(&s.fixed_b)),
        ];
        for (k, v) in axes {
            if !v.is_empty() {
                kv(k, v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_from_empty_input() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.train.group_size, 12);
        assert_eq!(cfg.train.batch_size, 16);
        assert_eq!(cfg.train.kl_weight, 0.01);
    }

    #[test]
    fn filter_noise_keys() {
        let cfg = ExperimentConfig::parse("filter.q = 1e-5\nfilter.r = 1e-2").unwrap();
        assert_eq!(cfg.train.filter_q, 1e-5);
        assert_eq!(cfg.train.filter_r, 1e-2);
    }

    #[test]
    fn comments_and_lists() {
        let cfg = ExperimentConfig::parse(
            "# header\n\nestimator = group_mean  # trailing\nsweep.kl_weight = 0, 0.001, 0.01, 0.05\nsweep.estimator = kalman,group_mean\nminibatch_size = 48\n",
        )
        .unwrap();
        assert_eq!(cfg.train.estimator, EstimatorKind::GroupMean);
        assert_eq!(cfg.sweep.kl_weight, vec![0.0, 0.001, 0.01, 0.05]);
        assert_eq!(
            cfg.sweep.estimator,
            vec![EstimatorKind::Kalman, EstimatorKind::GroupMean]
        );
        assert_eq!(cfg.train.minibatch_size, Some(48));
    }

    #[test]
    fn errors_name_line_and_key() {
        let err = ExperimentConfig::parse("steps = 3\ngroup_size = 0").unwrap_err();
        match err {
            Error::Parse { line, key, .. } => {
                assert_eq!(line, 2);
                assert_eq!(key, "group_size");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            ExperimentConfig::parse("bogus = 1"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(ExperimentConfig::parse("steps = many").is_err());
        assert!(ExperimentConfig::parse("steps").is_err());
        assert!(ExperimentConfig::parse("clip_eps = 1.5").is_err());
        assert!(ExperimentConfig::parse("sweep.seed = 1,,2").is_err());
        assert!(ExperimentConfig::parse("filter.r = 0").is_err());
    }

    #[test]
    fn llm_preset() {
        let cfg = ExperimentConfig::parse("preset = llm_scale").unwrap();
        assert_eq!(cfg.train.learning_rate, 5e-6);
    }

    proptest! {
        #[test]
        fn text_round_trip(
            q in 0.0f64..1.0,
            r in 1e-9f64..10.0,
            alpha in 0.0f64..1.0,
            n in 1usize..64,
            seed in any::<u64>(),
            shuffle in any::<bool>(),
            seeds in proptest::collection::vec(any::<u64>(), 0..4),
        ) {
            let mut cfg = ExperimentConfig::default();
            cfg.train.filter_q = q;
            cfg.train.filter_r = r;
            cfg.train.kl_weight = alpha;
            cfg.train.group_size = n;
            cfg.train.seed = seed;
            cfg.train.shuffle_group_rewards = shuffle;
            cfg.sweep.seed = seeds;
            let text = cfg.to_text();
            let back = ExperimentConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.to_text(), text);
        }
    }
}
