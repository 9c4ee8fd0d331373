// Pure self-relearning of a fair coin: every run ends in a one-hot state.
// The empirical absorption time is compared with the exact expectation
// from the absorbing chain.

use collapse_unlearn::distributions::Categorical;
use collapse_unlearn::markov::{build_transition_matrix, expected_absorption_steps};
use collapse_unlearn::relearn::{run_relearn_loop, RelearnConfig, RelearnMode};
use collapse_unlearn::rng::stream_rng;

pub fn run_example() -> collapse_unlearn::Result<()> {
    let n = 20;
    let initial = Categorical::uniform(2)?;
    let config = RelearnConfig { mode: RelearnMode::Pure, n_generated: n, iterations: 10_000 };

    let mut times = Vec::new();
    for seed in 0..500 {
        let trace = run_relearn_loop(&config, &initial, None, &mut stream_rng(seed, 0))?;
        if let Some(t) = trace.absorbed_at() {
            times.push(t as f64);
        }
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;

    let chain = build_transition_matrix(n as u32, 2)?;
    let exact = expected_absorption_steps(&chain)?.steps_from(chain.central_state());
    println!("absorbed runs: {}/500", times.len());
    println!("mean steps to collapse: {mean:.2} (exact {exact:.2})");
    assert_eq!(times.len(), 500);
    assert!((mean - exact).abs() / exact < 0.1);
    Ok(())
}

fn main() -> collapse_unlearn::Result<()> {
    run_example()
}
