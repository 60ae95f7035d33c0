//! Fast invariant checks runnable from the command line.

use crate::advantage::{group_mean_advantage, RewardGroup, DEFAULT_EPS};
use crate::kalman::{filter_group, FilterParams, FilterState};
use crate::policy::{Policy, VOCAB};
use crate::rng;
use crate::stats::paired_t_test_one_tailed;
use crate::tasks::{reward, Op, Prompt, Tier};
use rand::Rng;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

fn random_group(rng: &mut impl Rng) -> Vec<f64> {
    let n = rng.random_range(1..=64);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

pub fn run_all() -> Vec<Check> {
    let mut rng = rng::stream(0x5e1f, &[]);
    let mut out = Vec::new();

    // gain bound, variance identity, contraction
    let mut worst_identity: f64 = 0.0;
    let mut bounds_ok = true;
    for _ in 0..1000 {
        let obs = random_group(&mut rng);
        for s in filter_group(&obs, &FilterParams::default(), FilterState::default()).unwrap() {
            let kr = s.gain * FilterParams::DEFAULT_R;
            worst_identity = worst_identity.max((s.posterior.p - kr).abs() / kr);
            bounds_ok &= (0.0..=1.0).contains(&s.gain) && s.posterior.p <= s.p_prior;
        }
    }
    out.push(check(
        "kalman gain bound and contraction",
        bounds_ok,
        String::new(),
    ));
    out.push(check(
        "kalman variance identity",
        worst_identity <= 1e-12,
        format!("max rel err {worst_identity:.3e}"),
    ));

    let mut worst_mean: f64 = 0.0;
    let params = FilterParams::new(0.0, 1.0).unwrap();
    for _ in 0..1000 {
        let obs = random_group(&mut rng);
        let last = filter_group(&obs, &params, FilterState::new(0.0, 1e12).unwrap()).unwrap();
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        worst_mean = worst_mean.max((last.last().unwrap().posterior.x_hat - mean).abs());
    }
    out.push(check(
        "kalman sample-mean limit",
        worst_mean < 1e-6,
        format!("max abs err {worst_mean:.3e}"),
    ));

    let mut worst_sum: f64 = 0.0;
    for _ in 0..1000 {
        let g = RewardGroup::new(random_group(&mut rng)).unwrap();
        worst_sum = worst_sum.max(
            group_mean_advantage(&g, DEFAULT_EPS)
                .unwrap()
                .values()
                .iter()
                .sum::<f64>()
                .abs(),
        );
    }
    out.push(check(
        "group-mean zero sum",
        worst_sum < 1e-9,
        format!("max |sum| {worst_sum:.3e}"),
    ));

    let table = [
        ("59", "59", 1.0),
        ("The answer is 59", "59", 0.5),
        ("60", "59", 0.0),
        ("159", "59", 0.5),
    ];
    out.push(check(
        "reward rule",
        table.iter().all(|&(a, g, r)| reward(a, g).unwrap() == r),
        String::new(),
    ));

    let t = paired_t_test_one_tailed(&[0.6, 0.5, 0.7], &[0.9, 0.8, 0.7]).unwrap();
    let p_exact = 0.5 - 1.0 / 6f64.sqrt();
    out.push(check(
        "paired t-test fixture",
        (t.t - 2.0).abs() < 1e-9 && t.df == 2 && (t.p - p_exact).abs() < 1e-10,
        format!("t={} df={} p={}", t.t, t.df, t.p),
    ));

    // analytic gradient vs central differences
    let mut policy = Policy::new(64).unwrap();
    policy
        .logits_mut()
        .iter_mut()
        .for_each(|l| *l = rng.random_range(-2.0..2.0));
    let prompt = Prompt::new(0, Tier::Normal, 12, Op::Sub, 30);
    let tokens = [1, 8, 11];
    let grad = policy.sequence_logprob_grad(&prompt, &tokens);
    let h = 1e-5;
    let mut worst_fd: f64 = 0.0;
    for (bucket, row) in grad.rows() {
        for (v, &g) in row.iter().enumerate() {
            let i = bucket * VOCAB + v;
            let mut plus = policy.clone();
            plus.logits_mut()[i] += h;
            let mut minus = policy.clone();
            minus.logits_mut()[i] -= h;
            let fd = (plus.sequence_logprob(&prompt, &tokens)
                - minus.sequence_logprob(&prompt, &tokens))
                / (2.0 * h);
            worst_fd = worst_fd.max((fd - g).abs() / g.abs().max(1e-3));
        }
    }
    out.push(check(
        "log-prob gradient vs finite differences",
        worst_fd < 1e-5,
        format!("max rel err {worst_fd:.3e}"),
    ));
    out
}
