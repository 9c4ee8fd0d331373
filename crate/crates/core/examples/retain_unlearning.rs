// Relearning on retain data plus self-generated samples drives the mass of
// every category outside the retain set to exactly zero.

use collapse_unlearn::distributions::{Categorical, SampleCounts};
use collapse_unlearn::relearn::{run_relearn_loop, RelearnConfig, RelearnMode};
use collapse_unlearn::rng::stream_rng;

pub fn run_example() -> collapse_unlearn::Result<()> {
    let retain = SampleCounts::new(vec![25, 25, 0, 0, 0])?;
    let config = RelearnConfig { mode: RelearnMode::RetainAugmented { retain }, n_generated: 50, iterations: 2000 };
    let initial = Categorical::uniform(5)?;
    let trace = run_relearn_loop(&config, &initial, None, &mut stream_rng(3, 0))?;
    for row in trace.rows.iter().filter(|r| [1, 2, 5, 10, 20].contains(&r.iteration)) {
        println!(
            "t={:>3} p={:?} non-retain mass {:.4}",
            row.iteration,
            row.dist.probs().iter().map(|p| (p * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            row.non_retain_mass.unwrap_or(f64::NAN)
        );
    }
    let hit = trace.absorbed_at().expect("non-retain mass reaches zero");
    println!("non-retain mass is exactly 0 from iteration {hit}");
    assert_eq!(trace.last().unwrap().non_retain_mass, Some(0.0));
    Ok(())
}

fn main() -> collapse_unlearn::Result<()> {
    run_example()
}
