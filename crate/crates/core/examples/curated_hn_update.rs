// Best-of-n curation: Bradley-Terry selection, the exact reweighting it
// induces, and the climb of the expected reward to its maximum.

use collapse_unlearn::curation::{
    apply_hn_update, bt_probabilities, bt_select, curated_refit_step, hn_weights, reward_moments, CuratedUpdate,
    HnMethod, RewardedCandidates, Selector,
};
use collapse_unlearn::distributions::{total_variation, Categorical};
use collapse_unlearn::rng::stream_rng;

pub fn run_example() -> collapse_unlearn::Result<()> {
    let mut rng = stream_rng(5, 0);
    let pair = RewardedCandidates::from_rewards(&[1.0, 0.0])?;
    let wins = (0..100_000).filter(|_| bt_select(&pair, 1.0, &mut rng) == Ok(0)).count();
    println!("BT picks the better of (1, 0) {:.4} of the time (exact {:.4})", wins as f64 / 1e5, bt_probabilities(&[1.0, 0.0], 1.0)?[0]);

    let worked = CuratedUpdate::new(Categorical::uniform(2)?, vec![1.0, 0.0], 2, 1.0)?;
    let h = hn_weights(&worked, HnMethod::default(), &mut rng)?;
    println!("H = ({:.6}, {:.6}), updated p = {:?}", h[0], h[1], apply_hn_update(&worked)?.probs());

    let rewards: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
    let mut update = CuratedUpdate::new(Categorical::uniform(8)?, rewards.clone(), 4, 1.0)?;
    let sampled = curated_refit_step(update.base(), &rewards, 4, 200_000, Selector::Bt { tau: 1.0 }, &mut rng)?;
    println!("one sampled step vs exact: TV {:.4}", total_variation(&sampled, &apply_hn_update(&update)?)?);
    for t in 1..=200 {
        update = update.with_base(apply_hn_update(&update)?)?;
        if [1, 10, 50, 200].contains(&t) {
            let (mean, var) = reward_moments(update.base(), &rewards)?;
            println!("t={t:>3} P(best) {:.6} E[e^r] {mean:.6} Var[e^r] {var:.2e}", update.base().probs()[7]);
        }
    }
    Ok(())
}

fn main() -> collapse_unlearn::Result<()> {
    run_example()
}
