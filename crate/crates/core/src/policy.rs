//! Hash-bucketed autoregressive softmax policy over a 12-symbol vocabulary.
//!
//! Each decoding context `(prompt features, position, previous token)` is
//! hashed into one of `buckets` rows of a logit table. The next-token
//! distribution is the softmax of that row, which keeps log-probabilities and
//! their gradients exact and closed-form. Distinct contexts may collide in the
//! same row; that is accepted as capacity noise.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{invalid, io_err, Error, Result};
use crate::rng;
use crate::tasks::{reward, Op, Prompt};

/// `'0'..='9'`, `'-'`, end-of-sequence.
pub const VOCAB: usize = 12;
pub const MINUS: usize = 10;
pub const EOS: usize = 11;
/// Previous-token value used at position 0. Never emitted.
const START: usize = 12;

pub const DEFAULT_BUCKETS: usize = 4096;
pub const DEFAULT_MAX_LEN: usize = 5;

const CHECKPOINT_MAGIC: &str = "#krpo-policy v1";

pub fn token_char(token: usize) -> Option<char> {
    match token {
        0..=9 => char::from_digit(token as u32, 10),
        MINUS => Some('-'),
        _ => None,
    }
}

/// Text of the tokens before the first EOS.
pub fn decode(tokens: &[usize]) -> String {
    tokens.iter().map_while(|&t| token_char(t)).collect()
}

/// Inverse of [`decode`] for answers made of digits and `'-'`; appends EOS.
pub fn encode(answer: &str) -> Result<Vec<usize>> {
    let mut out = answer
        .chars()
        .map(|c| match c {
            '-' => Ok(MINUS),
            c => c
                .to_digit(10)
                .map(|d| d as usize)
                .ok_or_else(|| Error::InvalidArgument(format!("cannot encode `{c}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    out.push(EOS);
    Ok(out)
}

/// One sampled answer for a prompt.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub prompt_id: u64,
    pub tokens: Vec<usize>,
    pub answer: String,
    pub token_logprobs: Vec<f64>,
    pub reward: f64,
}

/// Gradient rows keyed by bucket; buckets not present are zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseGrad {
    rows: BTreeMap<usize, [f64; VOCAB]>,
}

impl SparseGrad {
    pub fn get(&self, bucket: usize, token: usize) -> f64 {
        self.rows.get(&bucket).map_or(0.0, |row| row[token])
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &[f64; VOCAB])> {
        self.rows.iter().map(|(&b, r)| (b, r))
    }

    pub fn is_zero(&self) -> bool {
        self.rows.values().all(|r| r.iter().all(|&g| g == 0.0))
    }

    /// `dense[bucket * VOCAB + token] += scale * self[bucket][token]`
    pub fn add_scaled_to(&self, dense: &mut [f64], scale: f64) {
        for (&bucket, row) in &self.rows {
            let base = bucket * VOCAB;
            for (d, g) in dense[base..base + VOCAB].iter_mut().zip(row) {
                *d += scale * g;
            }
        }
    }
}

fn softmax(row: &[f64]) -> [f64; VOCAB] {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; VOCAB];
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(row) {
        *o = (l - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
    out
}

fn log_softmax_at(row: &[f64], token: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    row[token] - lse
}

/// Logit table plus the bucketing rule. Cloning produces an independent
/// snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    buckets: usize,
    logits: Vec<f64>,
}

impl Default for Policy {
    fn default() -> Self {
        Self {
            buckets: DEFAULT_BUCKETS,
            logits: vec![0.0; DEFAULT_BUCKETS * VOCAB],
        }
    }
}

impl Policy {
    /// Uniform policy (all logits zero).
    pub fn new(buckets: usize) -> Result<Self> {
        if buckets == 0 {
            return invalid("policy needs at least one context bucket");
        }
        Ok(Self {
            buckets,
            logits: vec![0.0; buckets * VOCAB],
        })
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn row(&self, bucket: usize) -> &[f64] {
        &self.logits[bucket * VOCAB..(bucket + 1) * VOCAB]
    }

    pub fn row_mut(&mut self, bucket: usize) -> &mut [f64] {
        &mut self.logits[bucket * VOCAB..(bucket + 1) * VOCAB]
    }

    /// Context row for emitting token number `position` after `prev`
    /// (`None` at the start). Features are the tier, both operands, the
    /// operator, the position and the previous token.
    pub fn bucket(&self, prompt: &Prompt, position: usize, prev: Option<usize>) -> usize {
        let op = match prompt.op {
            Op::Add => 0,
            Op::Sub => 1,
        };
        let key = rng::mix(
            0x6b72_706f,
            &[
                prompt.tier.index(),
                prompt.a as u64,
                prompt.b as u64,
                op,
                position as u64,
                prev.unwrap_or(START) as u64,
            ],
        );
        (key % self.buckets as u64) as usize
    }

    pub fn token_distribution(
        &self,
        prompt: &Prompt,
        position: usize,
        prev: Option<usize>,
    ) -> Result<[f64; VOCAB]> {
        let row = self.row(self.bucket(prompt, position, prev));
        if row.iter().any(|l| !l.is_finite()) {
            return Err(Error::Internal("non-finite logit in policy table".into()));
        }
        Ok(softmax(row))
    }

    /// Samples until EOS or `max_len` tokens, scoring the decoded answer
    /// against the prompt's ground truth.
    pub fn sample_rollout<R: Rng + ?Sized>(
        &self,
        prompt: &Prompt,
        rng: &mut R,
        max_len: usize,
    ) -> Rollout {
        let mut tokens = Vec::with_capacity(max_len);
        let mut token_logprobs = Vec::with_capacity(max_len);
        let mut prev = None;
        for position in 0..max_len.max(1) {
            let row = self.row(self.bucket(prompt, position, prev));
            let probs = softmax(row);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut token = VOCAB - 1;
            for (t, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    token = t;
                    break;
                }
            }
            tokens.push(token);
            token_logprobs.push(log_softmax_at(row, token));
            if token == EOS {
                break;
            }
            prev = Some(token);
        }
        let answer = decode(&tokens);
        let reward =
            reward(&answer, &prompt.ground_truth).expect("prompts carry a nonempty ground truth");
        Rollout {
            prompt_id: prompt.id,
            tokens,
            answer,
            token_logprobs,
            reward,
        }
    }

    /// Argmax decoding; ties go to the lowest token index.
    pub fn greedy_answer(&self, prompt: &Prompt, max_len: usize) -> String {
        let mut tokens = Vec::new();
        let mut prev = None;
        for position in 0..max_len.max(1) {
            let row = self.row(self.bucket(prompt, position, prev));
            let mut best = 0;
            for t in 1..VOCAB {
                if row[t] > row[best] {
                    best = t;
                }
            }
            tokens.push(best);
            if best == EOS {
                break;
            }
            prev = Some(best);
        }
        decode(&tokens)
    }

    fn contexts<'a>(
        &'a self,
        prompt: &'a Prompt,
        tokens: &'a [usize],
    ) -> impl Iterator<Item = (usize, usize)> + 'a {
        tokens.iter().enumerate().map(move |(pos, &t)| {
            let prev = pos.checked_sub(1).map(|p| tokens[p]);
            (self.bucket(prompt, pos, prev), t)
        })
    }

    pub fn sequence_logprob(&self, prompt: &Prompt, tokens: &[usize]) -> f64 {
        self.contexts(prompt, tokens)
            .map(|(bucket, t)| log_softmax_at(self.row(bucket), t))
            .sum()
    }

    /// Gradient of [`Policy::sequence_logprob`] with respect to the logits:
    /// `onehot(emitted) - softmax(row)` accumulated per visited context.
    pub fn sequence_logprob_grad(&self, prompt: &Prompt, tokens: &[usize]) -> SparseGrad {
        self.logprob_and_grad(prompt, tokens).1
    }

    pub fn logprob_and_grad(&self, prompt: &Prompt, tokens: &[usize]) -> (f64, SparseGrad) {
        let mut grad = SparseGrad::default();
        let mut lp = 0.0;
        for (bucket, t) in self.contexts(prompt, tokens) {
            let row = self.row(bucket);
            lp += log_softmax_at(row, t);
            let probs = softmax(row);
            let g = grad.rows.entry(bucket).or_insert([0.0; VOCAB]);
            for (v, (gv, p)) in g.iter_mut().zip(probs).enumerate() {
                *gv += if v == t { 1.0 - p } else { -p };
            }
        }
        (lp, grad)
    }

    /// Single-sample KL estimate `log pi(y) - log pi_ref(y)` on the rollout.
    pub fn kl_sample_estimate(
        &self,
        reference: &Policy,
        prompt: &Prompt,
        rollout: &Rollout,
    ) -> f64 {
        self.sequence_logprob(prompt, &rollout.tokens)
            - reference.sequence_logprob(prompt, &rollout.tokens)
    }

    /// CSV checkpoint: a version header, then `bucket,token,logit` for every
    /// entry whose bit pattern is not +0.0. Values round-trip exactly.
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!(
            "{CHECKPOINT_MAGIC} buckets={} vocab={VOCAB}\nbucket,token,logit\n",
            self.buckets
        );
        for (i, l) in self.logits.iter().enumerate() {
            if l.to_bits() != 0 {
                writeln!(out, "{},{},{:?}", i / VOCAB, i % VOCAB, l).unwrap();
            }
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let rest = header.strip_prefix(CHECKPOINT_MAGIC).ok_or_else(|| {
            Error::InvalidArgument(format!("not a policy checkpoint: `{header}`"))
        })?;
        let mut buckets = None;
        for field in rest.split_whitespace() {
            match field.split_once('=') {
                Some(("buckets", v)) => buckets = v.parse::<usize>().ok(),
                Some(("vocab", v)) if v == VOCAB.to_string() => {}
                _ => return invalid(format!("bad checkpoint header field `{field}`")),
            }
        }
        let mut policy = Policy::new(
            buckets.ok_or_else(|| Error::InvalidArgument("checkpoint missing buckets".into()))?,
        )?;
        if lines.next() != Some("bucket,token,logit") {
            return invalid("checkpoint missing column header");
        }
        for (n, line) in lines.enumerate() {
            let bad = || Error::InvalidArgument(format!("checkpoint row {}: `{line}`", n + 1));
            let mut parts = line.split(',');
            let bucket: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let token: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let logit: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if parts.next().is_some()
                || bucket >= policy.buckets
                || token >= VOCAB
                || !logit.is_finite()
            {
                return Err(bad());
            }
            policy.logits[bucket * VOCAB + token] = logit;
        }
        Ok(policy)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::Tier;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prompt() -> Prompt {
        Prompt::new(0, Tier::Easy, 3, Op::Add, 4)
    }

    fn random_policy(seed: u64, buckets: usize, scale: f64) -> Policy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Policy::new(buckets).unwrap();
        p.logits_mut()
            .iter_mut()
            .for_each(|l| *l = rng.random_range(-scale..scale));
        p
    }

    #[test]
    fn uniform_distribution() {
        let d = Policy::new(16)
            .unwrap()
            .token_distribution(&prompt(), 0, None)
            .unwrap();
        for p in d {
            assert_relative_eq!(p, 1.0 / 12.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn saturated_distribution() {
        let mut policy = Policy::new(16).unwrap();
        let b = policy.bucket(&prompt(), 0, None);
        policy.row_mut(b)[7] = 1e3;
        let d = policy.token_distribution(&prompt(), 0, None).unwrap();
        assert_relative_eq!(d[7], 1.0);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_logits_rejected() {
        let mut policy = Policy::new(1).unwrap();
        policy.row_mut(0)[0] = f64::NAN;
        assert!(matches!(
            policy.token_distribution(&prompt(), 0, None),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn forced_eos() {
        let mut policy = Policy::new(64).unwrap();
        let b = policy.bucket(&prompt(), 0, None);
        policy.row_mut(b)[EOS] = 1e3;
        let r = policy.sample_rollout(
            &prompt(),
            &mut ChaCha8Rng::seed_from_u64(1),
            DEFAULT_MAX_LEN,
        );
        assert_eq!(r.tokens, vec![EOS]);
        assert_eq!(r.answer, "");
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn rollout_is_reproducible() {
        let policy = random_policy(3, 64, 2.0);
        let a = policy.sample_rollout(
            &prompt(),
            &mut ChaCha8Rng::seed_from_u64(9),
            DEFAULT_MAX_LEN,
        );
        let b = policy.sample_rollout(
            &prompt(),
            &mut ChaCha8Rng::seed_from_u64(9),
            DEFAULT_MAX_LEN,
        );
        assert_eq!(a, b);
        assert_eq!(a.tokens.len(), a.token_logprobs.len());
        assert!(a.token_logprobs.iter().all(|&l| l <= 0.0));
        assert!(a.tokens.len() <= DEFAULT_MAX_LEN);
        assert_relative_eq!(
            a.token_logprobs.iter().sum::<f64>(),
            policy.sequence_logprob(&prompt(), &a.tokens),
            max_relative = 1e-12
        );
    }

    #[test]
    fn sampling_matches_pmf() {
        // Pearson chi-square over the first token; df = 11, critical value at
        // p = 0.001 is 31.264.
        let policy = random_policy(11, 8, 1.5);
        let pmf = policy.token_distribution(&prompt(), 0, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mut counts = [0usize; VOCAB];
        for _ in 0..n {
            counts[policy.sample_rollout(&prompt(), &mut rng, 1).tokens[0]] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(pmf)
            .map(|(&c, p)| {
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        assert!(chi2 < 31.264, "chi2 = {chi2}");
    }

    #[test]
    fn logprob_closed_forms() {
        let uniform = Policy::new(32).unwrap();
        assert_relative_eq!(
            uniform.sequence_logprob(&prompt(), &[1, EOS]),
            2.0 * (1.0f64 / 12.0).ln(),
            max_relative = 1e-14
        );

        let mut sat = Policy::new(32).unwrap();
        let b = sat.bucket(&prompt(), 0, None);
        sat.row_mut(b)[5] = 1e3;
        assert!(sat.sequence_logprob(&prompt(), &[5]).abs() < 1e-12);
        assert!(sat
            .sequence_logprob_grad(&prompt(), &[5])
            .rows()
            .all(|(_, r)| r.iter().all(|g| g.abs() < 1e-12)));
    }

    #[test]
    fn uniform_gradient_closed_form() {
        let policy = Policy::new(32).unwrap();
        let g = policy.sequence_logprob_grad(&prompt(), &[4]);
        let b = policy.bucket(&prompt(), 0, None);
        for v in 0..VOCAB {
            let expected = if v == 4 {
                1.0 - 1.0 / 12.0
            } else {
                -1.0 / 12.0
            };
            assert_relative_eq!(g.get(b, v), expected, max_relative = 1e-14);
        }
    }

    #[test]
    fn kl_estimates() {
        let p = random_policy(5, 64, 1.0);
        let r = p.sample_rollout(
            &prompt(),
            &mut ChaCha8Rng::seed_from_u64(0),
            DEFAULT_MAX_LEN,
        );
        assert_eq!(p.kl_sample_estimate(&p.clone(), &prompt(), &r), 0.0);

        // Saturate the live policy along a fixed two-token sequence.
        let tokens = vec![2, EOS];
        let mut live = Policy::new(64).unwrap();
        let b0 = live.bucket(&prompt(), 0, None);
        live.row_mut(b0)[2] = 1e3;
        let b1 = live.bucket(&prompt(), 1, Some(2));
        live.row_mut(b1)[EOS] = 1e3;
        let rollout = Rollout {
            prompt_id: 0,
            tokens: tokens.clone(),
            answer: decode(&tokens),
            token_logprobs: vec![0.0, 0.0],
            reward: 0.0,
        };
        let kl = live.kl_sample_estimate(&Policy::new(64).unwrap(), &prompt(), &rollout);
        assert_relative_eq!(kl, -2.0 * (1.0f64 / 12.0).ln(), max_relative = 1e-12);
    }

    #[test]
    fn snapshot_is_independent() {
        let mut live = random_policy(1, 16, 1.0);
        let snap = live.clone();
        let before = snap.sequence_logprob(&prompt(), &[3, EOS]);
        live.logits_mut()
            .iter_mut()
            .for_each(|l| *l = 2.0 * *l + 1.0);
        assert_eq!(snap.sequence_logprob(&prompt(), &[3, EOS]), before);
    }

    #[test]
    fn encode_decode() {
        assert_eq!(decode(&encode("-42").unwrap()), "-42");
        assert_eq!(decode(&[1, EOS, 2]), "1");
        assert!(encode("4a").is_err());
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        assert!(Policy::from_checkpoint("hello").is_err());
        assert!(Policy::from_checkpoint(
            "#krpo-policy v1 buckets=2 vocab=12\nbucket,token,logit\n5,0,1.0\n"
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn rows_normalize(row in proptest::collection::vec(-50.0f64..50.0, VOCAB)) {
            let p = softmax(&row);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x > 0.0));
        }

        #[test]
        fn checkpoint_round_trip(seed in any::<u64>(), scale in 1e-300f64..1e300) {
            let mut p = random_policy(seed, 8, 1.0);
            p.logits_mut()[3] *= scale;
            p.logits_mut()[5] = -0.0;
            p.logits_mut()[7] = 0.0;
            let back = Policy::from_checkpoint(&p.to_checkpoint()).unwrap();
            prop_assert!(p.logits().iter().zip(back.logits()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
