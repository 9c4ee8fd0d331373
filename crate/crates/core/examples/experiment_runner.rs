// Running a seeded experiment from a config and reading its aggregate.

use collapse_unlearn::harness::{run_experiment, ExperimentConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join(format!("collapse-unlearn-example-{}", std::process::id()));
    let text = format!(
        r#"
seeds = [0, 1, 2]
output_dir = "{}"

[experiment]
kind = "analytic_mixture"
initial = [0.0, 1.0]
retain = [1.0, 0.0]
alpha = 1.0
iterations = 50
"#,
        out.display()
    );
    let config = ExperimentConfig::from_toml_str(&text)?;
    let run = run_experiment(&config)?;
    println!("traces: {:?}", run.traces);
    for a in &run.aggregate {
        println!("{:<24} mean {:.3e} sd {:.3e}", a.metric, a.mean, a.stddev);
    }
    let tv = run.mean("final_tv_to_retain").unwrap_or(f64::NAN);
    println!("TV to retain after 50 steps: {tv:.3e} (bound 2^-50 = {:.3e})", 0.5f64.powi(50));
    std::fs::remove_dir_all(&out)?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
