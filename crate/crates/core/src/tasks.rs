//! Micro-arithmetic prompts and the rule-based reward.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Easy,
    Normal,
    Hard,
}

impl Tier {
    pub fn max_operand(self) -> i64 {
        match self {
            Tier::Easy => 9,
            Tier::Normal => 99,
            Tier::Hard => 999,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Easy => "easy",
            Tier::Normal => "normal",
            Tier::Hard => "hard",
        }
    }

    pub(crate) fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Tier::Easy),
            "normal" => Ok(Tier::Normal),
            "hard" => Ok(Tier::Hard),
            other => invalid(format!(
                "unknown tier `{other}` (expected easy, normal or hard)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Add,
    Sub,
}

impl Op {
    pub fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
        }
    }

    pub fn apply(self, a: i64, b: i64) -> i64 {
        match self {
            Op::Add => a + b,
            Op::Sub => a - b,
        }
    }
}

/// One question with its ground-truth answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: u64,
    pub tier: Tier,
    pub a: i64,
    pub op: Op,
    pub b: i64,
    pub expression: String,
    pub ground_truth: String,
}

impl Prompt {
    pub fn new(id: u64, tier: Tier, a: i64, op: Op, b: i64) -> Self {
        Self {
            id,
            tier,
            a,
            op,
            b,
            expression: format!("{a} {} {b}", op.symbol()),
            ground_truth: op.apply(a, b).to_string(),
        }
    }
}

/// Ids of generated prompts start here for held-out evaluation sets, so they
/// never share a random stream with training prompts.
pub const EVAL_ID_OFFSET: u64 = 1 << 32;

pub fn generate_prompts(seed: u64, tier: Tier, count: usize) -> Result<Vec<Prompt>> {
    generate_prompts_from(seed, tier, 0, count)
}

/// Prompts with ids `first_id..first_id + count`. Each prompt draws from its
/// own stream keyed by `(seed, tier, id)`.
pub fn generate_prompts_from(
    seed: u64,
    tier: Tier,
    first_id: u64,
    count: usize,
) -> Result<Vec<Prompt>> {
    if count == 0 {
        return invalid("prompt count must be >= 1");
    }
    let max = tier.max_operand();
    Ok((first_id..first_id + count as u64)
        .map(|id| {
            let mut rng = rng::stream(seed, &[0x7072_6f6d_7074, tier.index(), id]);
            let a = rng.random_range(0..=max);
            let b = rng.random_range(0..=max);
            let op = if rng.random_bool(0.5) {
                Op::Add
            } else {
                Op::Sub
            };
            Prompt::new(id, tier, a, op, b)
        })
        .collect())
}

pub fn prompts_to_csv(prompts: &[Prompt]) -> String {
    let mut out = String::from("id,tier,expression,ground_truth\n");
    for p in prompts {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.id, p.tier, p.expression, p.ground_truth
        ));
    }
    out
}

/// 1.0 on exact match, 0.5 when the ground truth occurs anywhere inside the
/// answer (literal substring, so "59" inside "159" counts), 0.0 otherwise.
pub fn reward(answer: &str, ground_truth: &str) -> Result<f64> {
    if ground_truth.is_empty() {
        return invalid("ground truth must not be empty");
    }
    Ok(if answer == ground_truth {
        1.0
    } else if answer.contains(ground_truth) {
        0.5
    } else {
        0.0
    })
}

/// Mean half-credit score over `(answer, ground_truth)` pairs.
pub fn accuracy<A, G>(pairs: &[(A, G)]) -> Result<f64>
where
    A: AsRef<str>,
    G: AsRef<str>,
{
    if pairs.is_empty() {
        return invalid("accuracy needs at least one pair");
    }
    let total = pairs
        .iter()
        .map(|(a, g)| reward(a.as_ref(), g.as_ref()))
        .sum::<Result<f64>>()?;
    Ok(total / pairs.len() as f64)
}
