//! Generate arithmetic prompts and score candidate answers with the
//! exact-match / half-credit reward.
//!
//! ```bash
//! cargo run -p krpo --example reward_rules -- hard
//! ```

use krpo::tasks::{generate_prompts, prompts_to_csv, reward, Tier};

fn main() -> krpo::Result<()> {
    let tier: Tier = std::env::args()
        .nth(1)
        .as_deref()
        .unwrap_or("normal")
        .parse()?;
    let prompts = generate_prompts(42, tier, 5)?;
    print!("{}", prompts_to_csv(&prompts));
    println!();
    for p in &prompts {
        let gt = &p.ground_truth;
        for answer in [
            gt.clone(),
            format!("The answer is {gt}"),
            format!("{gt}0"),
            "7".to_string(),
        ] {
            println!(
                "{:>12}  {:<22} -> {}",
                p.expression,
                format!("{answer:?}"),
                reward(&answer, gt)?
            );
        }
    }
    Ok(())
}
