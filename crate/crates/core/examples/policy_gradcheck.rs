//! Sample from a random bucketed softmax policy and check its analytic
//! log-probability gradient against central differences.
//!
//! ```bash
//! cargo run -p krpo --example policy_gradcheck
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use krpo::policy::{Policy, DEFAULT_MAX_LEN, VOCAB};
use krpo::tasks::{generate_prompts, Tier};

fn main() -> krpo::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut policy = Policy::new(256)?;
    policy
        .logits_mut()
        .iter_mut()
        .for_each(|l| *l = rng.random_range(-1.0..1.0));
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for prompt in generate_prompts(7, Tier::Normal, 10)? {
        let rollout = policy.sample_rollout(&prompt, &mut rng, DEFAULT_MAX_LEN);
        let grad = policy.sequence_logprob_grad(&prompt, &rollout.tokens);
        let rows: Vec<usize> = grad.rows().map(|(b, _)| b).collect();
        for b in rows {
            for v in 0..VOCAB {
                let i = b * VOCAB + v;
                let orig = policy.logits()[i];
                policy.logits_mut()[i] = orig + h;
                let up = policy.sequence_logprob(&prompt, &rollout.tokens);
                policy.logits_mut()[i] = orig - h;
                let down = policy.sequence_logprob(&prompt, &rollout.tokens);
                policy.logits_mut()[i] = orig;
                let fd = (up - down) / (2.0 * h);
                worst = worst.max((grad.get(b, v) - fd).abs() / fd.abs().max(1e-3));
            }
        }
        println!(
            "{:>8} -> {:<6} logprob {:.4}  reward {}",
            prompt.expression,
            format!("{:?}", rollout.answer),
            policy.sequence_logprob(&prompt, &rollout.tokens),
            rollout.reward
        );
    }
    println!("max relative gradient error {worst:.3e}");
    Ok(())
}
