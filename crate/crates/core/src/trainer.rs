//! The training loop: sample a group of answers per prompt, turn rewards into
//! advantages, then descend a clipped surrogate with a KL penalty using Adam
//! and global-norm gradient clipping.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advantage::{Estimator, EstimatorConfig, RewardGroup, DEFAULT_EPS};
use crate::error::{invalid, Error, Result};
use crate::kalman::{FilterParams, FilterState};
use crate::optim::{clip_global_norm, Adam};
use crate::policy::{Policy, Rollout, DEFAULT_BUCKETS, DEFAULT_MAX_LEN};
use crate::rng;
use crate::stats::{running_average, RunSummary};
use crate::tasks::{generate_prompts, generate_prompts_from, reward, Prompt, Tier, EVAL_ID_OFFSET};

// stream tags
const SELECT: u64 = 1;
const ROLLOUT: u64 = 2;
const SHUFFLE: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Kalman,
    GroupMean,
    Fixed,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Kalman => "kalman",
            EstimatorKind::GroupMean => "group_mean",
            EstimatorKind::Fixed => "fixed",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kalman" => Ok(EstimatorKind::Kalman),
            "group_mean" => Ok(EstimatorKind::GroupMean),
            "fixed" => Ok(EstimatorKind::Fixed),
            other => invalid(format!(
                "unknown estimator `{other}` (expected kalman, group_mean or fixed)"
            )),
        }
    }
}

/// How the KL term enters the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlSign {
    /// `loss = -E[surrogate] + alpha * E[kl]`
    Penalty,
    /// `loss = -E[surrogate + alpha * kl]`, which rewards divergence.
    Literal,
}

impl KlSign {
    pub fn as_str(self) -> &'static str {
        match self {
            KlSign::Penalty => "penalty",
            KlSign::Literal => "literal",
        }
    }

    fn factor(self) -> f64 {
        match self {
            KlSign::Penalty => 1.0,
            KlSign::Literal => -1.0,
        }
    }
}

impl FromStr for KlSign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "penalty" => Ok(KlSign::Penalty),
            "literal" => Ok(KlSign::Literal),
            other => invalid(format!(
                "unknown kl sign `{other}` (expected penalty or literal)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub group_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_eps: f64,
    pub kl_weight: f64,
    pub kl_sign: KlSign,
    pub filter_q: f64,
    pub filter_r: f64,
    pub prior_mean: f64,
    pub prior_var: f64,
    pub numeric_eps: f64,
    pub grad_clip_norm: f64,
    pub steps: usize,
    pub seed: u64,
    pub estimator: EstimatorKind,
    pub fixed_b: f64,
    /// Entries per optimizer step; `None` splits the buffer into four.
    pub minibatch_size: Option<usize>,
    pub shuffle_group_rewards: bool,
    pub skip_degenerate_groups: bool,
    pub policy_buckets: usize,
    pub max_len: usize,
    pub tier: Tier,
    pub prompt_count: usize,
    pub eval_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            group_size: 12,
            batch_size: 16,
            learning_rate: 1e-2,
            clip_eps: 0.2,
            kl_weight: 0.01,
            kl_sign: KlSign::Penalty,
            filter_q: FilterParams::DEFAULT_Q,
            filter_r: FilterParams::DEFAULT_R,
            prior_mean: FilterState::DEFAULT_PRIOR_MEAN,
            prior_var: FilterState::DEFAULT_PRIOR_VAR,
            numeric_eps: DEFAULT_EPS,
            grad_clip_norm: 1.0,
            steps: 500,
            seed: 42,
            estimator: EstimatorKind::Kalman,
            fixed_b: 0.0,
            minibatch_size: None,
            shuffle_group_rewards: false,
            skip_degenerate_groups: false,
            policy_buckets: DEFAULT_BUCKETS,
            max_len: DEFAULT_MAX_LEN,
            tier: Tier::Normal,
            prompt_count: 64,
            eval_count: 64,
        }
    }
}

impl TrainConfig {
    /// Learning rate used for the billion-parameter models (5e-6); far too
    /// small to move a logit table in a few hundred steps.
    pub const LLM_SCALE_LEARNING_RATE: f64 = 5e-6;

    pub fn llm_scale() -> Self {
        Self {
            learning_rate: Self::LLM_SCALE_LEARNING_RATE,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 12] = [
            (self.group_size >= 1, "group_size must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (
                self.learning_rate > 0.0 && self.learning_rate.is_finite(),
                "learning_rate must be > 0",
            ),
            (
                self.clip_eps > 0.0 && self.clip_eps < 1.0,
                "clip_eps must be in (0, 1)",
            ),
            (
                self.kl_weight >= 0.0 && self.kl_weight.is_finite(),
                "kl_weight must be >= 0",
            ),
            (self.steps >= 1, "steps must be >= 1"),
            (self.grad_clip_norm > 0.0, "grad_clip_norm must be > 0"),
            (
                self.minibatch_size != Some(0),
                "minibatch_size must be >= 1",
            ),
            (self.policy_buckets >= 1, "policy.buckets must be >= 1"),
            (self.max_len >= 1, "policy.max_len must be >= 1"),
            (self.prompt_count >= 1, "prompt_count must be >= 1"),
            (self.eval_count >= 1, "eval_count must be >= 1"),
        ];
        if let Some((_, msg)) = checks.iter().find(|(ok, _)| !ok) {
            return invalid(*msg);
        }
        if !self.fixed_b.is_finite() {
            return invalid("fixed.b must be finite");
        }
        self.estimator_config().map(|_| ())
    }

    pub fn estimator_config(&self) -> Result<EstimatorConfig> {
        let estimator = match self.estimator {
            EstimatorKind::Kalman => Estimator::Kalman {
                params: FilterParams::new(self.filter_q, self.filter_r)?,
                init: FilterState::new(self.prior_mean, self.prior_var)?,
            },
            EstimatorKind::GroupMean => Estimator::GroupMean,
            EstimatorKind::Fixed => Estimator::Fixed { b: self.fixed_b },
        };
        EstimatorConfig::new(estimator, self.numeric_eps)
    }

    /// Window used to smooth reward curves: one fiftieth of the run.
    pub fn smoothing_window(&self) -> usize {
        (self.steps / 50).max(1)
    }
}

/// One rollout ready for optimization.
#[derive(Clone, Debug)]
pub struct BufferEntry {
    pub prompt: Prompt,
    pub rollout: Rollout,
    pub advantage: f64,
    /// Sequence log-probability under the policy that sampled it.
    pub old_logprob: f64,
    pub ref_logprob: f64,
    /// `old_logprob - ref_logprob`, kept for reporting.
    pub kl_sample: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub sum_reward: f64,
    pub mean_reward: f64,
    pub mean_kl: f64,
    /// Mean pre-clip gradient norm over the step's minibatches.
    pub grad_norm: f64,
    /// Mean minibatch loss.
    pub loss: f64,
}

pub const METRICS_CSV_HEADER: &str =
    "step,sum_reward,mean_reward,mean_kl,grad_norm,loss,estimator,seed";

impl StepMetrics {
    pub fn csv_row(&self, estimator: EstimatorKind, seed: u64) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.sum_reward,
            self.mean_reward,
            self.mean_kl,
            self.grad_norm,
            self.loss,
            estimator,
            seed
        )
    }
}

pub fn metrics_to_csv(metrics: &[StepMetrics], estimator: EstimatorKind, seed: u64) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for m in metrics {
        out.push_str(&m.csv_row(estimator, seed));
        out.push('\n');
    }
    out
}

/// `n` independent rollouts for one prompt and their rewards.
pub fn collect_group<R: Rng + ?Sized>(
    policy: &Policy,
    prompt: &Prompt,
    n: usize,
    rng: &mut R,
    max_len: usize,
) -> Result<(Vec<Rollout>, RewardGroup)> {
    if n == 0 {
        return invalid("group size must be >= 1");
    }
    let rollouts: Vec<Rollout> = (0..n)
        .map(|_| policy.sample_rollout(prompt, rng, max_len))
        .collect();
    let group = RewardGroup::new(rollouts.iter().map(|r| r.reward).collect())?;
    Ok((rollouts, group))
}

/// Advantages for one group. With `order`, the filter sees the rewards in that
/// permuted order and the advantages are mapped back to sampling order.
pub fn compute_advantages(
    rewards: &RewardGroup,
    cfg: &EstimatorConfig,
    order: Option<&[usize]>,
) -> Result<Vec<f64>> {
    let Some(order) = order else {
        return Ok(cfg.compute(rewards)?.into_inner());
    };
    let permuted = RewardGroup::new(order.iter().map(|&i| rewards.values()[i]).collect())?;
    let adv = cfg.compute(&permuted)?.into_inner();
    let mut out = vec![0.0; adv.len()];
    for (&i, a) in order.iter().zip(adv) {
        out[i] = a;
    }
    Ok(out)
}

/// Which side of the clipped surrogate is active for one entry.
fn surrogate_is_clipped(ratio: f64, advantage: f64, clip_eps: f64) -> bool {
    (advantage >= 0.0 && ratio > 1.0 + clip_eps) || (advantage < 0.0 && ratio < 1.0 - clip_eps)
}

/// Clipped surrogate loss with a KL term recomputed against `live`:
///
/// `loss = -mean(min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)) + alpha * mean(log pi - log pi_ref)`
///
/// where `rho = exp(log pi - log pi_old)`. Returns the loss and its exact
/// gradient with respect to `live`'s logits (dense, same layout).
pub fn clipped_surrogate_loss(
    live: &Policy,
    batch: &[BufferEntry],
    clip_eps: f64,
    kl_weight: f64,
    kl_sign: KlSign,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return invalid("loss needs a nonempty batch");
    }
    let scale = 1.0 / batch.len() as f64;
    let kl_coef = kl_sign.factor() * kl_weight;
    let mut loss = 0.0;
    let mut grad = vec![0.0; live.logits().len()];
    for e in batch {
        let (lp, g) = live.logprob_and_grad(&e.prompt, &e.rollout.tokens);
        let ratio = (lp - e.old_logprob).exp();
        let a = e.advantage;
        let mut dlp = kl_coef;
        if surrogate_is_clipped(ratio, a, clip_eps) {
            loss -= ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * a * scale;
        } else {
            loss -= ratio * a * scale;
            dlp -= ratio * a;
        }
        loss += kl_coef * (lp - e.ref_logprob) * scale;
        if dlp != 0.0 {
            g.add_scaled_to(&mut grad, dlp * scale);
        }
    }
    Ok((loss, grad))
}

/// Live, behavior and reference policies plus optimizer state.
pub struct Trainer {
    config: TrainConfig,
    estimator: EstimatorConfig,
    prompts: Vec<Prompt>,
    live: Policy,
    old: Policy,
    reference: Policy,
    adam: Adam,
    step: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let prompts = generate_prompts(config.seed, config.tier, config.prompt_count)?;
        let live = Policy::new(config.policy_buckets)?;
        Ok(Self {
            estimator: config.estimator_config()?,
            adam: Adam::new(live.logits().len(), config.learning_rate),
            old: live.clone(),
            reference: live.clone(),
            live,
            prompts,
            step: 0,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn policy(&self) -> &Policy {
        &self.live
    }

    pub fn reference(&self) -> &Policy {
        &self.reference
    }

    pub fn prompts(&self) -> &[Prompt] {
        &self.prompts
    }

    fn select_prompts(&self) -> Vec<Prompt> {
        let mut rng = rng::stream(self.config.seed, &[SELECT, self.step as u64]);
        let n = self.prompts.len();
        let b = self.config.batch_size;
        if b <= n {
            index::sample(&mut rng, n, b)
                .into_iter()
                .map(|i| self.prompts[i].clone())
                .collect()
        } else {
            (0..b)
                .map(|_| self.prompts[rng.random_range(0..n)].clone())
                .collect()
        }
    }

    /// Samples groups for this step's prompts and turns them into buffer
    /// entries. Returns the entries and every reward that was observed.
    pub fn collect_buffer(&self) -> Result<(Vec<BufferEntry>, Vec<f64>)> {
        let cfg = &self.config;
        let selected = self.select_prompts();
        let groups: Vec<Result<Vec<BufferEntry>>> = selected
            .par_iter()
            .enumerate()
            .map(|(j, prompt)| {
                let mut rng = rng::stream(cfg.seed, &[ROLLOUT, self.step as u64, j as u64]);
                let (rollouts, rewards) =
                    collect_group(&self.old, prompt, cfg.group_size, &mut rng, cfg.max_len)?;
                let advantages = if cfg.skip_degenerate_groups && rewards.is_degenerate() {
                    None
                } else if cfg.shuffle_group_rewards {
                    let mut order: Vec<usize> = (0..rewards.len()).collect();
                    order.shuffle(&mut rng::stream(
                        cfg.seed,
                        &[SHUFFLE, self.step as u64, j as u64],
                    ));
                    Some(compute_advantages(&rewards, &self.estimator, Some(&order))?)
                } else {
                    Some(compute_advantages(&rewards, &self.estimator, None)?)
                };
                Ok(rollouts
                    .into_iter()
                    .enumerate()
                    .map(|(i, rollout)| {
                        let old_logprob = self.old.sequence_logprob(prompt, &rollout.tokens);
                        let ref_logprob = self.reference.sequence_logprob(prompt, &rollout.tokens);
                        BufferEntry {
                            prompt: prompt.clone(),
                            advantage: advantages.as_ref().map_or(f64::NAN, |a| a[i]),
                            old_logprob,
                            ref_logprob,
                            kl_sample: old_logprob - ref_logprob,
                            rollout,
                        }
                    })
                    .collect())
            })
            .collect();
        let mut all = Vec::with_capacity(cfg.batch_size * cfg.group_size);
        for g in groups {
            all.extend(g?);
        }
        let rewards = all.iter().map(|e| e.rollout.reward).collect();
        Ok((all, rewards))
    }

    /// Minibatch passes over `buffer`, each followed by a clipped Adam step.
    /// Entries with a NaN advantage (skipped groups) are ignored. Returns the
    /// mean pre-clip gradient norm and mean loss.
    pub fn optimize_buffer(&mut self, buffer: &[BufferEntry]) -> Result<(f64, f64)> {
        let usable: Vec<BufferEntry> = buffer
            .iter()
            .filter(|e| !e.advantage.is_nan())
            .cloned()
            .collect();
        if usable.is_empty() {
            return Ok((0.0, 0.0));
        }
        let mb = self
            .config
            .minibatch_size
            .unwrap_or_else(|| usable.len().div_ceil(4));
        let mut norm_sum = 0.0;
        let mut loss_sum = 0.0;
        let mut passes = 0;
        for chunk in usable.chunks(mb) {
            let (loss, mut grad) = clipped_surrogate_loss(
                &self.live,
                chunk,
                self.config.clip_eps,
                self.config.kl_weight,
                self.config.kl_sign,
            )?;
            norm_sum += clip_global_norm(&mut grad, self.config.grad_clip_norm);
            loss_sum += loss;
            passes += 1;
            self.adam.step(self.live.logits_mut(), &grad);
        }
        if self.live.logits().iter().any(|l| !l.is_finite()) {
            return Err(Error::Internal(format!(
                "non-finite logits after step {}",
                self.step
            )));
        }
        Ok((norm_sum / passes as f64, loss_sum / passes as f64))
    }

    pub fn train_step(&mut self) -> Result<StepMetrics> {
        let (buffer, rewards) = self.collect_buffer()?;
        let (grad_norm, loss) = self.optimize_buffer(&buffer)?;
        self.old = self.live.clone();
        self.step += 1;
        let sum_reward: f64 = rewards.iter().sum();
        Ok(StepMetrics {
            step: self.step,
            sum_reward,
            mean_reward: sum_reward / rewards.len() as f64,
            mean_kl: buffer.iter().map(|e| e.kl_sample).sum::<f64>() / buffer.len() as f64,
            grad_norm,
            loss,
        })
    }

    /// Greedy-decodes every prompt and scores it with half credit.
    pub fn evaluate(&self, prompts: &[Prompt]) -> Evaluation {
        let answers: Vec<String> = prompts
            .iter()
            .map(|p| self.live.greedy_answer(p, self.config.max_len))
            .collect();
        let per_question: Vec<f64> = prompts
            .iter()
            .zip(&answers)
            .map(|(p, a)| {
                reward(a, &p.ground_truth).expect("generated prompts have a ground truth")
            })
            .collect();
        let accuracy = per_question.iter().sum::<f64>() / per_question.len().max(1) as f64;
        Evaluation {
            accuracy,
            per_question,
            answers,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub per_question: Vec<f64>,
    pub answers: Vec<String>,
}

/// Everything a finished run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TrainConfig,
    pub metrics: Vec<StepMetrics>,
    pub smoothing_window: usize,
    pub final_smoothed_reward: f64,
    pub eval_prompt_ids: Vec<u64>,
    pub evaluation: Evaluation,
}

impl RunReport {
    pub fn smoothed_rewards(&self) -> Vec<f64> {
        let series: Vec<f64> = self.metrics.iter().map(|m| m.mean_reward).collect();
        running_average(&series, self.smoothing_window).expect("window is >= 1")
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            seed: self.config.seed,
            estimator: self.config.estimator.to_string(),
            final_smoothed_reward: self.final_smoothed_reward,
            accuracy: self.evaluation.accuracy,
            per_question: self.evaluation.per_question.clone(),
        }
    }
}

/// Trains for `config.steps` steps, calling `on_step` after each one, then
/// evaluates on a held-out prompt set.
pub fn run_with(config: &TrainConfig, mut on_step: impl FnMut(&StepMetrics)) -> Result<RunReport> {
    let mut trainer = Trainer::new(config.clone())?;
    let mut metrics = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let m = trainer.train_step()?;
        on_step(&m);
        metrics.push(m);
    }
    let eval_prompts =
        generate_prompts_from(config.seed, config.tier, EVAL_ID_OFFSET, config.eval_count)?;
    let evaluation = trainer.evaluate(&eval_prompts);
    let smoothing_window = config.smoothing_window();
    let series: Vec<f64> = metrics.iter().map(|m| m.mean_reward).collect();
    let final_smoothed_reward = *running_average(&series, smoothing_window)?
        .last()
        .expect("steps >= 1");
    Ok(RunReport {
        config: config.clone(),
        metrics,
        smoothing_window,
        final_smoothed_reward,
        eval_prompt_ids: eval_prompts.iter().map(|p| p.id).collect(),
        evaluation,
    })
}

pub fn run(config: &TrainConfig) -> Result<RunReport> {
    run_with(config, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::EOS;
    use crate::tasks::Op;
    use approx::assert_relative_eq;

    fn small_config() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            group_size: 6,
            steps: 3,
            policy_buckets: 256,
            tier: Tier::Easy,
            prompt_count: 8,
            eval_count: 4,
            ..TrainConfig::default()
        }
    }

    fn entry(policy: &Policy, tokens: Vec<usize>, advantage: f64, old_shift: f64) -> BufferEntry {
        let prompt = Prompt::new(0, Tier::Easy, 2, Op::Add, 3);
        let lp = policy.sequence_logprob(&prompt, &tokens);
        BufferEntry {
            rollout: Rollout {
                prompt_id: 0,
                answer: crate::policy::decode(&tokens),
                token_logprobs: vec![],
                tokens,
                reward: 0.0,
            },
            prompt,
            advantage,
            old_logprob: lp + old_shift,
            ref_logprob: lp,
            kl_sample: 0.0,
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                group_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                clip_eps: 1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                kl_weight: -0.1,
                ..TrainConfig::default()
            },
            TrainConfig {
                filter_r: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                steps: 0,
                ..TrainConfig::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn collect_group_examples() {
        let policy = Policy::new(64).unwrap();
        let prompt = Prompt::new(0, Tier::Easy, 1, Op::Add, 1);
        let (rollouts, rewards) =
            collect_group(&policy, &prompt, 12, &mut rng::stream(1, &[]), 5).unwrap();
        assert_eq!(rollouts.len(), 12);
        assert!(rewards.values().iter().all(|r| [0.0, 0.5, 1.0].contains(r)));
        let (again, _) = collect_group(&policy, &prompt, 12, &mut rng::stream(1, &[]), 5).unwrap();
        assert_eq!(rollouts, again);

        let mut solved = Policy::new(64).unwrap();
        let b0 = solved.bucket(&prompt, 0, None);
        solved.row_mut(b0)[2] = 1e3;
        let b1 = solved.bucket(&prompt, 1, Some(2));
        solved.row_mut(b1)[EOS] = 1e3;
        let (_, rewards) =
            collect_group(&solved, &prompt, 12, &mut rng::stream(2, &[]), 5).unwrap();
        assert_eq!(rewards.values(), &[1.0; 12]);
    }

    #[test]
    fn compute_advantages_delegates() {
        let g = RewardGroup::new(vec![1.0, 0.0]).unwrap();
        let gm = EstimatorConfig::new(Estimator::GroupMean, DEFAULT_EPS).unwrap();
        let a = compute_advantages(&g, &gm, None).unwrap();
        assert_relative_eq!(a[0], 1.0, max_relative = 1e-7);
        assert_relative_eq!(a[1], -1.0, max_relative = 1e-7);

        let fixed = EstimatorConfig::new(Estimator::Fixed { b: 0.0 }, DEFAULT_EPS).unwrap();
        let g2 = RewardGroup::new(vec![1.0, 0.5]).unwrap();
        assert_eq!(
            compute_advantages(&g2, &fixed, None).unwrap(),
            vec![1.0, 0.5]
        );

        let kalman = TrainConfig::default().estimator_config().unwrap();
        let a = compute_advantages(&g, &kalman, None).unwrap();
        assert_relative_eq!(a[1], -7.065_749_998_498_403, max_relative = 1e-12);
        // reversing the order feeds [0, 1] to the filter
        let rev = compute_advantages(&g, &kalman, Some(&[1, 0])).unwrap();
        let direct =
            compute_advantages(&RewardGroup::new(vec![0.0, 1.0]).unwrap(), &kalman, None).unwrap();
        assert_eq!(rev, vec![direct[1], direct[0]]);
    }

    #[test]
    fn unit_ratio_loss() {
        let policy = Policy::new(64).unwrap();
        let batch = vec![
            entry(&policy, vec![1, EOS], 1.0, 0.0),
            entry(&policy, vec![2, EOS], -1.0, 0.0),
        ];
        let (loss, _) = clipped_surrogate_loss(&policy, &batch, 0.2, 0.0, KlSign::Penalty).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn zero_advantage_zero_gradient() {
        let policy = Policy::new(64).unwrap();
        let batch = vec![
            entry(&policy, vec![1, EOS], 0.0, 0.0),
            entry(&policy, vec![4, 4, EOS], 0.0, 0.3),
        ];
        let (loss, grad) =
            clipped_surrogate_loss(&policy, &batch, 0.2, 0.0, KlSign::Penalty).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
        assert!(clipped_surrogate_loss(&policy, &[], 0.2, 0.0, KlSign::Penalty).is_err());
    }

    #[test]
    fn dead_zone() {
        let policy = Policy::new(64).unwrap();
        // old_logprob lower than live by 0.5 -> rho = e^0.5 > 1.2
        let (_, g) = clipped_surrogate_loss(
            &policy,
            &[entry(&policy, vec![3, EOS], 2.0, -0.5)],
            0.2,
            0.0,
            KlSign::Penalty,
        )
        .unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
        let (_, g) = clipped_surrogate_loss(
            &policy,
            &[entry(&policy, vec![3, EOS], -2.0, 0.5)],
            0.2,
            0.0,
            KlSign::Penalty,
        )
        .unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
        // outside the dead zone the gradient is live
        let (_, g) = clipped_surrogate_loss(
            &policy,
            &[entry(&policy, vec![3, EOS], -2.0, -0.5)],
            0.2,
            0.0,
            KlSign::Penalty,
        )
        .unwrap();
        assert!(g.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn kl_sign_flips_penalty_gradient() {
        let policy = Policy::new(64).unwrap();
        let batch = vec![entry(&policy, vec![7, EOS], 0.0, 0.0)];
        let (_, pen) = clipped_surrogate_loss(&policy, &batch, 0.2, 0.5, KlSign::Penalty).unwrap();
        let (_, lit) = clipped_surrogate_loss(&policy, &batch, 0.2, 0.5, KlSign::Literal).unwrap();
        assert!(pen.iter().any(|&x| x != 0.0));
        for (a, b) in pen.iter().zip(&lit) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn zero_advantages_leave_params_unchanged() {
        let mut trainer = Trainer::new(TrainConfig {
            kl_weight: 0.0,
            ..small_config()
        })
        .unwrap();
        let (mut buffer, _) = trainer.collect_buffer().unwrap();
        buffer.iter_mut().for_each(|e| e.advantage = 0.0);
        let before = trainer.policy().clone();
        trainer.optimize_buffer(&buffer).unwrap();
        assert_eq!(trainer.policy(), &before);
    }

    #[test]
    fn ratio_is_one_at_collection() {
        let mut trainer = Trainer::new(small_config()).unwrap();
        trainer.train_step().unwrap();
        let (buffer, _) = trainer.collect_buffer().unwrap();
        for e in &buffer {
            let lp = trainer
                .policy()
                .sequence_logprob(&e.prompt, &e.rollout.tokens);
            assert!(((lp - e.old_logprob).exp() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reward_accounting() {
        let cfg = small_config();
        let mut trainer = Trainer::new(cfg.clone()).unwrap();
        let (buffer, rewards) = trainer.collect_buffer().unwrap();
        assert_eq!(rewards.len(), cfg.batch_size * cfg.group_size);
        let expected: f64 = buffer.iter().map(|e| e.rollout.reward).sum();
        let m = trainer.train_step().unwrap();
        assert_eq!(m.sum_reward, expected);
        assert!(m.sum_reward <= (cfg.batch_size * cfg.group_size) as f64);
    }

    #[test]
    fn deterministic_runs() {
        let cfg = small_config();
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
        let other = run(&TrainConfig {
            seed: 777,
            ..cfg.clone()
        })
        .unwrap();
        assert_ne!(run(&cfg).unwrap().metrics, other.metrics);
    }

    #[test]
    fn skipped_groups_contribute_no_gradient() {
        let cfg = TrainConfig {
            skip_degenerate_groups: true,
            tier: Tier::Hard,
            kl_weight: 0.0,
            ..small_config()
        };
        // A uniform policy almost never answers a hard prompt, so every group
        // is all zeros and gets skipped.
        let mut trainer = Trainer::new(cfg).unwrap();
        let (buffer, rewards) = trainer.collect_buffer().unwrap();
        if rewards.iter().all(|&r| r == 0.0) {
            assert!(buffer.iter().all(|e| e.advantage.is_nan()));
            let before = trainer.policy().clone();
            assert_eq!(trainer.optimize_buffer(&buffer).unwrap(), (0.0, 0.0));
            assert_eq!(trainer.policy(), &before);
        }
    }

    #[test]
    fn smoke_run_report() {
        let report = run(&TrainConfig {
            steps: 1,
            ..small_config()
        })
        .unwrap();
        assert_eq!(report.metrics.len(), 1);
        assert_eq!(report.evaluation.per_question.len(), 4);
        assert!((0.0..=1.0).contains(&report.evaluation.accuracy));
    }
}
