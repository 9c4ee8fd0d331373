// Gaussian mixtures relearned on their own samples, with and without the
// retain cloud mixed back in.

use collapse_unlearn::relearn::{gmm_relearn_loop, two_cluster_setup, GmmRelearnConfig, GmmRelearnMode};
use collapse_unlearn::rng::stream_rng;

pub fn run_example() -> collapse_unlearn::Result<()> {
    let mut rng = stream_rng(11, 0);
    let setup = two_cluster_setup(&[-5.0], &[5.0], 500, &mut rng)?;
    for c in setup.initial.components() {
        println!("initial component: w={:.3} mean={:.3} var={:.3}", c.weight, c.mean[0], c.cov[0]);
    }

    let pure = GmmRelearnConfig { n: 200, iterations: 200, retain_center: Some(vec![-5.0]), ..Default::default() };
    let trace = gmm_relearn_loop(&setup.initial, &GmmRelearnMode::Pure, &pure, &mut rng)?;
    for r in trace.rows.iter().step_by(40) {
        let w: Vec<String> = r.model.components().iter().map(|c| format!("{:.3}", c.weight)).collect();
        println!("pure   t={:>3} weights [{}] min var {:.3e}", r.iteration, w.join(", "), r.min_variance);
    }

    let retain = GmmRelearnConfig { n: 500, iterations: 100, retain_center: Some(vec![-5.0]), ..Default::default() };
    let mode = GmmRelearnMode::RetainAugmented(setup.retain.clone());
    let trace = gmm_relearn_loop(&setup.initial, &mode, &retain, &mut rng)?;
    for r in trace.rows.iter().step_by(20) {
        println!(
            "retain t={:>3} weight near retain mean {:.4}, singular components {}",
            r.iteration,
            r.retain_weight.unwrap_or(f64::NAN),
            r.singularities
        );
    }
    Ok(())
}

fn main() -> collapse_unlearn::Result<()> {
    run_example()
}
