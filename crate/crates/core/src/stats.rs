//! Reward-curve smoothing, one-tailed paired t-tests and cross-run tables.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Error, Result};

/// Mean of the trailing `window` values ending at each index. The window
/// grows from one element at the start instead of padding.
pub fn running_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return invalid("running average window must be >= 1");
    }
    Ok((0..series.len())
        .map(|k| {
            let slice = &series[(k + 1).saturating_sub(window)..=k];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    /// Upper-tail probability for the alternative `b > a`.
    pub p: f64,
}

/// Paired one-tailed t-test on `d_i = b_i - a_i` with the sample (n - 1)
/// standard deviation.
pub fn paired_t_test_one_tailed(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return invalid(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        ));
    }
    if a.len() < 2 {
        return invalid("paired t-test needs at least two pairs");
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    if d.iter().all(|&x| x == d[0]) {
        return Err(Error::DegenerateVariance);
    }
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = mean / (var.sqrt() / n.sqrt());
    let df = a.len() - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(TTest {
        t,
        df,
        p: dist.sf(t),
    })
}

/// What one finished run contributes to a comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub estimator: String,
    pub final_smoothed_reward: f64,
    pub accuracy: f64,
    /// Half-credit score of every evaluation question, in a fixed order.
    pub per_question: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Concatenate per-question scores across seeds.
    Question,
    /// One pair per seed (final accuracy).
    Seed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub seed: u64,
    pub final_reward_a: f64,
    pub final_reward_b: f64,
    pub accuracy_a: f64,
    pub accuracy_b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label_a: String,
    pub label_b: String,
    pub pairing: Pairing,
    pub rows: Vec<ComparisonRow>,
    pub mean_final_reward_a: f64,
    pub mean_final_reward_b: f64,
    pub mean_accuracy_a: f64,
    pub mean_accuracy_b: f64,
    /// `None` when the test is undefined (too few pairs or zero variance).
    pub t_test: Option<TTest>,
    pub t_test_note: Option<String>,
}

impl Comparison {
    pub fn mean_accuracy_diff(&self) -> f64 {
        self.mean_accuracy_b - self.mean_accuracy_a
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "seed,final_reward_a,final_reward_b,accuracy_a,accuracy_b,accuracy_diff\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.seed,
                r.final_reward_a,
                r.final_reward_b,
                r.accuracy_a,
                r.accuracy_b,
                r.accuracy_b - r.accuracy_a
            ));
        }
        out.push_str(&format!(
            "mean,{},{},{},{},{}\n",
            self.mean_final_reward_a,
            self.mean_final_reward_b,
            self.mean_accuracy_a,
            self.mean_accuracy_b,
            self.mean_accuracy_diff()
        ));
        match &self.t_test {
            Some(t) => out.push_str(&format!("# t={},df={},p={}\n", t.t, t.df, t.p)),
            None => out.push_str("# t=n/a,df=n/a,p=n/a\n"),
        }
        out
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Pairs runs by seed and tests whether method `b` beats method `a`.
pub fn compare_runs(a: &[RunSummary], b: &[RunSummary], pairing: Pairing) -> Result<Comparison> {
    if a.is_empty() || b.is_empty() {
        return invalid("comparison needs at least one run per method");
    }
    let mut a: Vec<&RunSummary> = a.iter().collect();
    let mut b: Vec<&RunSummary> = b.iter().collect();
    a.sort_by_key(|r| r.seed);
    b.sort_by_key(|r| r.seed);
    let seeds_a: Vec<u64> = a.iter().map(|r| r.seed).collect();
    let seeds_b: Vec<u64> = b.iter().map(|r| r.seed).collect();
    if seeds_a != seeds_b {
        return invalid(format!("seed sets differ: {seeds_a:?} vs {seeds_b:?}"));
    }
    if seeds_a.windows(2).any(|w| w[0] == w[1]) {
        return invalid(format!("duplicate seed in {seeds_a:?}"));
    }

    let (xs, ys): (Vec<f64>, Vec<f64>) = match pairing {
        Pairing::Seed => (
            a.iter().map(|r| r.accuracy).collect(),
            b.iter().map(|r| r.accuracy).collect(),
        ),
        Pairing::Question => {
            for (ra, rb) in a.iter().zip(&b) {
                if ra.per_question.len() != rb.per_question.len() {
                    return invalid(format!("seed {}: evaluation sets differ in size", ra.seed));
                }
            }
            (
                a.iter()
                    .flat_map(|r| r.per_question.iter().copied())
                    .collect(),
                b.iter()
                    .flat_map(|r| r.per_question.iter().copied())
                    .collect(),
            )
        }
    };
    let (t_test, t_test_note) = match paired_t_test_one_tailed(&xs, &ys) {
        Ok(t) => (Some(t), None),
        Err(e @ (Error::DegenerateVariance | Error::InvalidArgument(_))) => {
            (None, Some(e.to_string()))
        }
        Err(e) => return Err(e),
    };

    Ok(Comparison {
        label_a: a[0].estimator.clone(),
        label_b: b[0].estimator.clone(),
        pairing,
        rows: a
            .iter()
            .zip(&b)
            .map(|(ra, rb)| ComparisonRow {
                seed: ra.seed,
                final_reward_a: ra.final_smoothed_reward,
                final_reward_b: rb.final_smoothed_reward,
                accuracy_a: ra.accuracy,
                accuracy_b: rb.accuracy,
            })
            .collect(),
        mean_final_reward_a: mean(a.iter().map(|r| r.final_smoothed_reward)),
        mean_final_reward_b: mean(b.iter().map(|r| r.final_smoothed_reward)),
        mean_accuracy_a: mean(a.iter().map(|r| r.accuracy)),
        mean_accuracy_b: mean(b.iter().map(|r| r.accuracy)),
        t_test,
        t_test_note,
    })
}
