// Transition matrices of the relearning chain and the linear growth of the
// expected time to collapse with the sample size.

use collapse_unlearn::markov::{build_transition_matrix, expected_absorption_steps, simulate_absorption, Absorption};
use collapse_unlearn::rng::stream_rng;

pub fn run_example() -> collapse_unlearn::Result<()> {
    for n in 1..=3 {
        let chain = build_transition_matrix(n, 2)?;
        println!("P{n}:");
        for i in 0..chain.len() {
            let row: Vec<String> = chain.row(i).iter().map(|p| format!("{p:.8}")).collect();
            println!("  [{}]", row.join(", "));
        }
    }

    let mut points = Vec::new();
    for n in 2..=30u32 {
        let chain = build_transition_matrix(n, 2)?;
        let report = expected_absorption_steps(&chain)?;
        points.push((n as f64, report.steps_from(chain.central_state())));
    }
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let m = points.len() as f64;
    let (mx, my) = (sx / m, sy / m);
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = points.iter().map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|(_, y)| (y - my).powi(2)).sum();
    println!("central-start steps ~ {slope:.3}·n + {:.3}, R² = {:.5}", my - slope * mx, 1.0 - ss_res / ss_tot);

    let chain = build_transition_matrix(3, 3)?;
    let start = chain.central_state();
    let exact = expected_absorption_steps(&chain)?.steps_from(start);
    let mut rng = stream_rng(7, 0);
    let runs = 20_000;
    let mut total = 0u64;
    for _ in 0..runs {
        if let Absorption::Absorbed { steps } = simulate_absorption(&chain, start, 10_000, &mut rng)? {
            total += steps;
        }
    }
    println!("n=3, K=3 from {:?}: exact {exact:.4}, simulated {:.4}", chain.states()[start], total as f64 / runs as f64);
    Ok(())
}

fn main() -> collapse_unlearn::Result<()> {
    run_example()
}
