//! Every cargo example, run as a test.

#[allow(dead_code)]
mod categorical_collapse {
    include!("../examples/categorical_collapse.rs");
}

#[allow(dead_code)]
mod markov_absorption {
    include!("../examples/markov_absorption.rs");
}

#[allow(dead_code)]
mod retain_unlearning {
    include!("../examples/retain_unlearning.rs");
}

#[allow(dead_code)]
mod analytic_mixture {
    include!("../examples/analytic_mixture.rs");
}

#[allow(dead_code)]
mod gmm_relearn {
    include!("../examples/gmm_relearn.rs");
}

#[allow(dead_code)]
mod curated_hn_update {
    include!("../examples/curated_hn_update.rs");
}

#[allow(dead_code)]
mod rouge_reward {
    include!("../examples/rouge_reward.rs");
}

#[allow(dead_code)]
mod qa_unlearn {
    include!("../examples/qa_unlearn.rs");
}

#[allow(dead_code)]
mod experiment_runner {
    include!("../examples/experiment_runner.rs");
}

#[test]
fn example_categorical_collapse() {
    categorical_collapse::run_example().unwrap();
}

#[test]
fn example_markov_absorption() {
    markov_absorption::run_example().unwrap();
}

#[test]
fn example_retain_unlearning() {
    retain_unlearning::run_example().unwrap();
}

#[test]
fn example_analytic_mixture() {
    analytic_mixture::run_example().unwrap();
}

#[test]
fn example_gmm_relearn() {
    gmm_relearn::run_example().unwrap();
}

#[test]
fn example_curated_hn_update() {
    curated_hn_update::run_example().unwrap();
}

#[test]
fn example_rouge_reward() {
    rouge_reward::run_example().unwrap();
}

#[test]
fn example_qa_unlearn() {
    qa_unlearn::run_example().unwrap();
}

#[test]
fn example_experiment_runner() {
    experiment_runner::run_example().unwrap();
}
