use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use collapse_unlearn::harness::{run_command, CliOverrides};

/// Seeded relearning and unlearning experiments.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pure or retain-augmented categorical relearning.
    Categorical(RunArgs),
    /// Absorbing-chain analysis of categorical relearning.
    Markov(RunArgs),
    /// Analytic mixture recursion toward the retain distribution.
    Mixture(RunArgs),
    /// Gaussian-mixture relearning.
    Gmm(RunArgs),
    /// Repeated best-of-n curation of a finite distribution.
    Curate(RunArgs),
    /// Tabular question-answering unlearning.
    Qa(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds such as `0,1,2` or `0..5`; override the config.
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads; falls back to PMC_WORKERS, then the config.
    #[arg(long, env = "PMC_WORKERS")]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (name, args) = match cli.command {
        Command::Categorical(a) => ("categorical", a),
        Command::Markov(a) => ("markov", a),
        Command::Mixture(a) => ("mixture", a),
        Command::Gmm(a) => ("gmm", a),
        Command::Curate(a) => ("curate", a),
        Command::Qa(a) => ("qa", a),
    };
    let overrides = CliOverrides { out: args.out, seeds: args.seeds, workers: args.workers };
    match run_command(name, &args.config, &overrides) {
        Ok(run) => {
            println!("wrote {} traces to {}", run.traces.len(), run.output_dir.display());
            for a in &run.aggregate {
                println!("{:<28} mean {:>14.6e}  sd {:>12.4e}  (n={})", a.metric, a.mean, a.stddev, a.count);
            }
            let failed = run.failed_seeds();
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("seeds failed: {failed:?} (details in {})", run.aggregate_file.display());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
