//! Seeded experiment runner.
//!
//! An experiment is a TOML document with a seed list, an output directory
//! and an `[experiment]` table whose `kind` selects the parameter block:
//!
//! ```toml
//! seeds = [0, 1, 2, 3, 4]
//! output_dir = "out/pure"
//! workers = 4               # optional
//!
//! [experiment]
//! kind = "categorical_pure"
//! initial = [0.5, 0.5]
//! n = 20
//! iterations = 10000
//! ```
//!
//! [`run_experiment`] validates everything up front, runs each seed on its
//! own rng stream (`stream_rng(seed, 0)`), and writes `trace_seed{seed}.csv`
//! per seed, `aggregate.csv`, `config.toml` (the effective config) and
//! `metadata.toml` (version and wall-clock time). Everything except
//! `metadata.toml` is a pure function of the config.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curation::{
    apply_hn_update, curated_refit_step, hn_term_count, reward_moments, CuratedUpdate, Selector,
    DEFAULT_HN_TERM_CAP,
};
use crate::distributions::{Categorical, EmOptions, SampleCounts, VARIANCE_FLOOR};
use crate::markov::{
    build_transition_matrix_capped, expected_absorption_steps, simulate_absorption, state_count, Absorption,
    AbsorbingChain, AbsorptionReport, DEFAULT_STATE_CAP,
};
use crate::qa_unlearn::{
    evaluate_metrics, init_memorized_model, qa_trace_table, run_pmc, synthetic_dataset, ForgetUpdate, PmcConfig,
    QaDataset, QaSet, SyntheticQaSpec, TabularQaModel,
};
use crate::relearn::{
    gmm_relearn_loop, run_relearn_loop, two_cluster_setup, GmmRelearnConfig, GmmRelearnMode, RelearnConfig,
    RelearnMode,
};
use crate::rng::stream_rng;
use crate::table::{fmt_real, Table};

/// Environment variables consulted for the worker count, first match wins.
pub const WORKER_ENV_VARS: [&str; 2] = ["PMC_WORKERS", "COLLAPSE_WORKERS"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    CategoricalPure(CategoricalPureParams),
    CategoricalRetain(CategoricalRetainParams),
    AnalyticMixture(AnalyticMixtureParams),
    MarkovAnalysis(MarkovParams),
    GmmRelearn(GmmParams),
    CuratedUpdate(CuratedParams),
    QaUnlearn(QaParams),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::CategoricalPure(_) => "categorical_pure",
            Experiment::CategoricalRetain(_) => "categorical_retain",
            Experiment::AnalyticMixture(_) => "analytic_mixture",
            Experiment::MarkovAnalysis(_) => "markov_analysis",
            Experiment::GmmRelearn(_) => "gmm_relearn",
            Experiment::CuratedUpdate(_) => "curated_update",
            Experiment::QaUnlearn(_) => "qa_unlearn",
        }
    }

    /// CLI subcommand that runs this kind.
    pub fn command(&self) -> &'static str {
        match self {
            Experiment::CategoricalPure(_) | Experiment::CategoricalRetain(_) => "categorical",
            Experiment::AnalyticMixture(_) => "mixture",
            Experiment::MarkovAnalysis(_) => "markov",
            Experiment::GmmRelearn(_) => "gmm",
            Experiment::CuratedUpdate(_) => "curate",
            Experiment::QaUnlearn(_) => "qa",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoricalPureParams {
    pub initial: Vec<f64>,
    pub n: u64,
    pub iterations: usize,
    /// Distribution the KL column is measured against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoricalRetainParams {
    pub initial: Vec<f64>,
    pub retain_counts: Vec<u64>,
    pub n: u64,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticMixtureParams {
    pub initial: Vec<f64>,
    pub retain: Vec<f64>,
    pub alpha: f64,
    pub iterations: usize,
    /// Forget distribution for the KL column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forget: Option<Vec<f64>>,
}

fn default_state_cap() -> usize {
    DEFAULT_STATE_CAP
}

fn default_max_steps() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovParams {
    pub n_values: Vec<u32>,
    pub k: usize,
    #[serde(default = "default_state_cap")]
    pub state_cap: usize,
    /// Monte Carlo walks from the central state per n and seed; 0 skips simulation.
    #[serde(default)]
    pub mc_runs: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default = "default_true")]
    pub write_matrices: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GmmModeName {
    Pure,
    RetainAugmented,
}

fn default_points_per_cluster() -> usize {
    500
}
fn default_radius() -> f64 {
    1.0
}
fn default_collapse_variance() -> f64 {
    VARIANCE_FLOOR * (1.0 + 1e-6)
}
fn default_divergence() -> f64 {
    10.0
}
fn default_em_iterations() -> usize {
    EmOptions::default().max_iterations
}
fn default_em_tolerance() -> f64 {
    EmOptions::default().tolerance
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmParams {
    pub mode: GmmModeName,
    pub retain_center: Vec<f64>,
    pub forget_center: Vec<f64>,
    #[serde(default = "default_points_per_cluster")]
    pub points_per_cluster: usize,
    pub n: usize,
    pub iterations: usize,
    #[serde(default)]
    pub stop_on_collapse: bool,
    #[serde(default = "default_radius")]
    pub retain_radius: f64,
    #[serde(default = "default_collapse_variance")]
    pub collapse_variance: f64,
    #[serde(default = "default_divergence")]
    pub divergence_factor: f64,
    #[serde(default = "default_em_iterations")]
    pub em_max_iterations: usize,
    #[serde(default = "default_em_tolerance")]
    pub em_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorName {
    #[default]
    Bt,
    Argmax,
}

fn selector(name: SelectorName, tau: f64) -> Selector {
    match name {
        SelectorName::Bt => Selector::Bt { tau },
        SelectorName::Argmax => Selector::Argmax,
    }
}

fn default_tau() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CuratedMethod {
    #[default]
    Analytic,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuratedParams {
    pub base: Vec<f64>,
    pub rewards: Vec<f64>,
    pub n: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub iterations: usize,
    #[serde(default)]
    pub method: CuratedMethod,
    #[serde(default)]
    pub selector: SelectorName,
    #[serde(default)]
    pub m_curated: u64,
}

fn default_noise() -> f64 {
    0.2
}
fn default_lambda() -> f64 {
    1.0
}
fn default_n_samples() -> usize {
    10
}
fn default_m_curated() -> u64 {
    10_000
}
fn default_eta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaParams {
    /// Dataset file; relative paths resolve against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Generated dataset, used when `dataset` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticQaSpec>,
    /// Seed of the generated dataset; shared by every run.
    #[serde(default)]
    pub dataset_seed: u64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_m_curated")]
    pub m_curated: u64,
    #[serde(default)]
    pub selector: SelectorName,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub iterations: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub forget_update: ForgetUpdate,
}

/// Why a run could not proceed.
#[derive(Debug, Clone, PartialEq)]
pub enum HarnessError {
    /// Every violated field, collected before any computation.
    Config(Vec<String>),
    /// Filesystem or serialization failure.
    Io(String),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(problems) => {
                writeln!(f, "invalid configuration:")?;
                for p in problems {
                    writeln!(f, "  - {p}")?;
                }
                Ok(())
            }
            HarnessError::Io(msg) => write!(f, "i/o failure: {msg}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io(_) => 1,
        }
    }
}

fn io_err(context: impl fmt::Display) -> impl FnOnce(std::io::Error) -> HarnessError {
    move |e| HarnessError::Io(format!("{context}: {e}"))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(vec![e.to_string()]))
    }

    /// Parses a config file and resolves a relative dataset path against its directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        let mut config = Self::from_toml_str(&text)?;
        if let Experiment::QaUnlearn(QaParams { dataset: Some(d), .. }) = &mut config.experiment {
            if d.is_relative() {
                if let Some(dir) = path.parent() {
                    *d = dir.join(&*d);
                }
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Io(format!("config echo: {e}")))
    }

    /// Checks every field and returns all violations at once.
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.prepare().map(|_| ())
    }

    fn prepare(&self) -> Result<Prepared, HarnessError> {
        let mut p = Problems::default();
        if self.seeds.is_empty() {
            p.push("seeds: at least one seed is required");
        }
        let mut seen = HashSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                p.push(format!("seeds: {s} is listed twice"));
            }
        }
        if self.workers == Some(0) {
            p.push("workers: must be at least 1");
        }
        if self.output_dir.as_os_str().is_empty() {
            p.push("output_dir: must not be empty");
        }
        let prepared = match &self.experiment {
            Experiment::CategoricalPure(c) => prepare_pure(c, &mut p),
            Experiment::CategoricalRetain(c) => prepare_retain(c, &mut p),
            Experiment::AnalyticMixture(c) => prepare_mixture(c, &mut p),
            Experiment::MarkovAnalysis(c) => prepare_markov(c, &mut p),
            Experiment::GmmRelearn(c) => prepare_gmm(c, &mut p),
            Experiment::CuratedUpdate(c) => prepare_curated(c, &mut p),
            Experiment::QaUnlearn(c) => prepare_qa(c, &mut p),
        };
        match prepared {
            Some(prep) if p.0.is_empty() => Ok(prep),
            _ => Err(HarnessError::Config(p.0)),
        }
    }
}

#[derive(Default)]
struct Problems(Vec<String>);

impl Problems {
    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(msg());
        }
    }

    fn categorical(&mut self, field: &str, probs: &[f64]) -> Option<Categorical> {
        Categorical::new(probs.to_vec()).map_err(|e| self.push(format!("{field}: {e}"))).ok()
    }

    fn same_k(&mut self, field: &str, a: &Option<Categorical>, k: usize) {
        if let Some(a) = a {
            self.check(a.k() == k, || format!("{field}: has {} categories, expected {k}", a.k()));
        }
    }
}

enum Prepared {
    Relearn { config: RelearnConfig, initial: Categorical, reference: Option<Categorical> },
    Markov { params: MarkovParams, chains: Vec<(AbsorbingChain, AbsorptionReport)> },
    Gmm { params: GmmParams, config: GmmRelearnConfig },
    Curated { update: CuratedUpdate, method: CuratedMethod, selector: Selector, iterations: usize, m_curated: u64 },
    Qa { dataset: QaDataset, model: TabularQaModel, config: PmcConfig },
}

fn prepare_pure(c: &CategoricalPureParams, p: &mut Problems) -> Option<Prepared> {
    let initial = p.categorical("initial", &c.initial);
    let reference = c.reference.as_ref().and_then(|r| p.categorical("reference", r));
    p.check(c.n >= 1, || "n: must be at least 1".into());
    p.check(c.iterations >= 1, || "iterations: must be at least 1".into());
    let initial = initial?;
    p.same_k("reference", &reference, initial.k());
    Some(Prepared::Relearn {
        config: RelearnConfig { mode: RelearnMode::Pure, n_generated: c.n, iterations: c.iterations },
        reference,
        initial,
    })
}

fn prepare_retain(c: &CategoricalRetainParams, p: &mut Problems) -> Option<Prepared> {
    let initial = p.categorical("initial", &c.initial);
    let reference = c.reference.as_ref().and_then(|r| p.categorical("reference", r));
    let retain = SampleCounts::new(c.retain_counts.clone()).map_err(|e| p.push(format!("retain_counts: {e}"))).ok();
    p.check(c.n >= 1, || "n: must be at least 1".into());
    p.check(c.iterations >= 1, || "iterations: must be at least 1".into());
    let initial = initial?;
    p.same_k("reference", &reference, initial.k());
    if let Some(r) = &retain {
        p.check(r.k() == initial.k(), || format!("retain_counts: has {} categories, expected {}", r.k(), initial.k()));
    }
    Some(Prepared::Relearn {
        config: RelearnConfig { mode: RelearnMode::RetainAugmented { retain: retain? }, n_generated: c.n, iterations: c.iterations },
        reference,
        initial,
    })
}

fn prepare_mixture(c: &AnalyticMixtureParams, p: &mut Problems) -> Option<Prepared> {
    let initial = p.categorical("initial", &c.initial);
    let retain = p.categorical("retain", &c.retain);
    let forget = c.forget.as_ref().and_then(|f| p.categorical("forget", f));
    p.check(c.alpha.is_finite() && c.alpha >= 0.0, || format!("alpha: must be finite and >= 0, got {}", c.alpha));
    p.check(c.iterations >= 1, || "iterations: must be at least 1".into());
    let initial = initial?;
    p.same_k("retain", &retain, initial.k());
    p.same_k("forget", &forget, initial.k());
    Some(Prepared::Relearn {
        config: RelearnConfig {
            mode: RelearnMode::AnalyticMixture { retain: retain?, alpha: c.alpha },
            n_generated: 0,
            iterations: c.iterations,
        },
        reference: forget,
        initial,
    })
}

fn prepare_markov(c: &MarkovParams, p: &mut Problems) -> Option<Prepared> {
    p.check(!c.n_values.is_empty(), || "n_values: at least one sample size is required".into());
    p.check(c.k >= 2, || format!("k: must be at least 2, got {}", c.k));
    p.check(c.mc_runs == 0 || c.max_steps >= 1, || "max_steps: must be at least 1 when mc_runs > 0".into());
    let mut chains = Vec::new();
    for &n in &c.n_values {
        if n == 0 {
            p.push("n_values: every sample size must be at least 1");
            continue;
        }
        if c.k < 2 {
            continue;
        }
        let s = state_count(n as u64, c.k);
        if s > c.state_cap as u128 {
            p.push(format!("n_values: n={n}, k={} needs {s} states, state_cap is {}", c.k, c.state_cap));
            continue;
        }
        match build_transition_matrix_capped(n, c.k, c.state_cap).and_then(|chain| {
            let report = expected_absorption_steps(&chain)?;
            Ok((chain, report))
        }) {
            Ok(pair) => chains.push(pair),
            Err(e) => p.push(format!("n_values: n={n}: {e}")),
        }
    }
    Some(Prepared::Markov { params: c.clone(), chains })
}

fn prepare_gmm(c: &GmmParams, p: &mut Problems) -> Option<Prepared> {
    let d = c.retain_center.len();
    p.check((1..=2).contains(&d), || format!("retain_center: dimension must be 1 or 2, got {d}"));
    p.check(c.forget_center.len() == d, || "forget_center: must match retain_center's dimension".into());
    p.check(
        c.retain_center.iter().chain(&c.forget_center).all(|x| x.is_finite()),
        || "centers: coordinates must be finite".into(),
    );
    p.check(c.points_per_cluster >= 2, || "points_per_cluster: must be at least 2".into());
    p.check(c.n >= 1, || "n: must be at least 1".into());
    p.check(c.iterations >= 1, || "iterations: must be at least 1".into());
    p.check(c.retain_radius > 0.0, || "retain_radius: must be positive".into());
    p.check(c.collapse_variance > 0.0, || "collapse_variance: must be positive".into());
    p.check(c.divergence_factor > 1.0, || "divergence_factor: must exceed 1".into());
    p.check(c.em_max_iterations >= 1, || "em_max_iterations: must be at least 1".into());
    p.check(c.em_tolerance > 0.0, || "em_tolerance: must be positive".into());
    let config = GmmRelearnConfig {
        n: c.n,
        iterations: c.iterations,
        retain_center: Some(c.retain_center.clone()),
        retain_radius: c.retain_radius,
        collapse_variance: c.collapse_variance,
        divergence_factor: c.divergence_factor,
        stop_on_collapse: c.stop_on_collapse,
        em: EmOptions { max_iterations: c.em_max_iterations, tolerance: c.em_tolerance, ..EmOptions::default() },
    };
    Some(Prepared::Gmm { params: c.clone(), config })
}

fn prepare_curated(c: &CuratedParams, p: &mut Problems) -> Option<Prepared> {
    let base = p.categorical("base", &c.base);
    p.check(c.iterations >= 1, || "iterations: must be at least 1".into());
    p.check(c.tau > 0.0 && c.tau.is_finite(), || format!("tau: must be positive and finite, got {}", c.tau));
    match c.method {
        CuratedMethod::Sampled => p.check(c.m_curated >= 1, || "m_curated: must be at least 1 for sampled updates".into()),
        CuratedMethod::Analytic => p.check(c.selector == SelectorName::Bt, || {
            "selector: the analytic update is defined for bt selection only".into()
        }),
    }
    let base = base?;
    let update = CuratedUpdate::new(base, c.rewards.clone(), c.n, if c.tau > 0.0 { c.tau } else { 1.0 })
        .map_err(|e| p.push(format!("rewards/n: {e}")))
        .ok()?;
    if c.method == CuratedMethod::Analytic {
        let support = update.base().probs().iter().filter(|&&x| x > 0.0).count();
        let terms = hn_term_count(support, c.n);
        p.check(terms <= DEFAULT_HN_TERM_CAP, || {
            format!("n: exact update needs {terms} terms, cap is {DEFAULT_HN_TERM_CAP}")
        });
    }
    Some(Prepared::Curated {
        update,
        method: c.method,
        selector: selector(c.selector, c.tau),
        iterations: c.iterations,
        m_curated: c.m_curated,
    })
}

fn prepare_qa(c: &QaParams, p: &mut Problems) -> Option<Prepared> {
    let config = PmcConfig {
        lambda: c.lambda,
        n_samples: c.n_samples,
        m_curated: c.m_curated,
        selector: selector(c.selector, c.tau),
        iterations: c.iterations,
        eta: c.eta,
        forget_update: c.forget_update,
    };
    if let Err(e) = config.validate() {
        p.push(format!("pmc: {e}"));
    }
    p.check(c.iterations >= 1, || "iterations: must be at least 1".into());
    let dataset = match (&c.dataset, &c.synthetic) {
        (Some(_), Some(_)) => {
            p.push("dataset/synthetic: give one, not both");
            None
        }
        (None, None) => {
            p.push("dataset/synthetic: one of them is required");
            None
        }
        (Some(path), None) => QaDataset::from_path(path).map_err(|e| p.push(format!("dataset: {e}"))).ok(),
        (None, Some(spec)) => synthetic_dataset(spec, &mut stream_rng(c.dataset_seed, 0))
            .map_err(|e| p.push(format!("synthetic: {e}")))
            .ok(),
    }?;
    let model = init_memorized_model(&dataset, c.noise).map_err(|e| p.push(format!("noise/dataset: {e}"))).ok()?;
    for set in [QaSet::Forget, QaSet::Retain, QaSet::Heldout] {
        p.check(dataset.count(set) > 0, || format!("dataset: the {set:?} set is empty"));
    }
    p.check(!dataset.paraphrases().is_empty(), || "dataset: no paraphrased forget questions".into());
    Some(Prepared::Qa { dataset, model, config })
}

/// Named scalar metrics of one seed, or the error that aborted it.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedMetrics {
    pub seed: u64,
    pub outcome: Result<Vec<(String, f64)>, String>,
}

/// Mean and population standard deviation of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub metric: String,
    pub mean: f64,
    pub stddev: f64,
    /// Seeds contributing a defined (non-NaN) value.
    pub count: usize,
}

/// Per-metric mean and population standard deviation over successful
/// seeds. NaN marks an undefined metric and is skipped.
pub fn emit_aggregate(per_seed: &[SeedMetrics]) -> Vec<AggregateRow> {
    let mut names: Vec<&str> = Vec::new();
    for s in per_seed {
        if let Ok(m) = &s.outcome {
            for (name, _) in m {
                if !names.contains(&name.as_str()) {
                    names.push(name);
                }
            }
        }
    }
    names
        .into_iter()
        .map(|name| {
            let values: Vec<f64> = per_seed
                .iter()
                .filter_map(|s| s.outcome.as_ref().ok())
                .filter_map(|m| m.iter().find(|(n, _)| n == name).map(|&(_, v)| v))
                .filter(|v| !v.is_nan())
                .collect();
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
            AggregateRow { metric: name.to_string(), mean, stddev: var.sqrt(), count }
        })
        .collect()
}

/// Wide table: one row per seed, then `mean` and `stddev` rows.
pub fn aggregate_table(per_seed: &[SeedMetrics], aggregate: &[AggregateRow]) -> Table {
    let mut header = vec!["scope".to_string(), "seed".to_string(), "status".to_string()];
    header.extend(aggregate.iter().map(|a| a.metric.clone()));
    let mut t = Table::new(header);
    for s in per_seed {
        let mut row = vec!["seed".to_string(), s.seed.to_string()];
        match &s.outcome {
            Ok(m) => {
                row.push("ok".into());
                row.extend(aggregate.iter().map(|a| {
                    m.iter().find(|(n, _)| *n == a.metric).map_or(String::new(), |&(_, v)| fmt_real(v))
                }));
            }
            Err(e) => {
                row.push(format!("error: {e}"));
                row.extend(aggregate.iter().map(|_| String::new()));
            }
        }
        t.push(row);
    }
    let ok = per_seed.iter().filter(|s| s.outcome.is_ok()).count();
    for (scope, pick) in [("mean", 0), ("stddev", 1)] {
        let mut row = vec![scope.to_string(), String::new(), format!("ok={ok}/{}", per_seed.len())];
        row.extend(aggregate.iter().map(|a| fmt_real(if pick == 0 { a.mean } else { a.stddev })));
        t.push(row);
    }
    t
}

/// Files written by a run and its per-seed and aggregate metrics.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub traces: Vec<PathBuf>,
    /// Seed-independent outputs such as transition matrices.
    pub extra_files: Vec<PathBuf>,
    pub aggregate_file: PathBuf,
    pub config_echo: PathBuf,
    pub metadata_file: PathBuf,
    pub per_seed: Vec<SeedMetrics>,
    pub aggregate: Vec<AggregateRow>,
    pub version: &'static str,
    pub duration_secs: f64,
}

impl RunArtifacts {
    pub fn failed_seeds(&self) -> Vec<u64> {
        self.per_seed.iter().filter(|s| s.outcome.is_err()).map(|s| s.seed).collect()
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.aggregate.iter().find(|a| a.metric == metric).map(|a| a.mean)
    }
}

/// Worker count: explicit value, then the environment, then the config,
/// then the machine's parallelism.
pub fn resolve_workers(explicit: Option<usize>, config: Option<usize>) -> usize {
    explicit
        .or_else(|| {
            WORKER_ENV_VARS
                .iter()
                .find_map(|v| std::env::var(v).ok().and_then(|s| s.trim().parse::<usize>().ok()))
        })
        .or(config)
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Validates, runs every seed and writes all outputs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts, HarnessError> {
    let start = Instant::now();
    let prepared = config.prepare()?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;

    let workers = resolve_workers(None, config.workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Io(format!("thread pool: {e}")))?;
    let results: Vec<(u64, Result<(Table, Vec<(String, f64)>), String>)> = pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| (seed, run_seed(&prepared, seed).map_err(|e| e.to_string())))
            .collect()
    });

    let mut traces = Vec::new();
    let mut per_seed = Vec::new();
    for (seed, result) in results {
        match result {
            Ok((table, metrics)) => {
                let path = dir.join(format!("trace_seed{seed}.csv"));
                table.write_path(&path).map_err(io_err(path.display()))?;
                traces.push(path);
                per_seed.push(SeedMetrics { seed, outcome: Ok(metrics) });
            }
            Err(e) => per_seed.push(SeedMetrics { seed, outcome: Err(e) }),
        }
    }
    let extra_files = write_shared_outputs(&prepared, dir)?;
    let aggregate = emit_aggregate(&per_seed);
    let aggregate_file = dir.join("aggregate.csv");
    aggregate_table(&per_seed, &aggregate).write_path(&aggregate_file).map_err(io_err(aggregate_file.display()))?;
    let config_echo = dir.join("config.toml");
    std::fs::write(&config_echo, config.to_toml_string()?).map_err(io_err(config_echo.display()))?;

    let version = env!("CARGO_PKG_VERSION");
    let duration_secs = start.elapsed().as_secs_f64();
    let metadata_file = dir.join("metadata.toml");
    let metadata = format!(
        "tool = \"{}\"\nversion = \"{version}\"\nkind = \"{}\"\nworkers = {workers}\nduration_secs = {duration_secs}\n",
        env!("CARGO_PKG_NAME"),
        config.experiment.kind()
    );
    std::fs::write(&metadata_file, metadata).map_err(io_err(metadata_file.display()))?;

    Ok(RunArtifacts {
        output_dir: dir.clone(),
        traces,
        extra_files,
        aggregate_file,
        config_echo,
        metadata_file,
        per_seed,
        aggregate,
        version,
        duration_secs,
    })
}

type SeedOutput = (Table, Vec<(String, f64)>);

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn run_seed(prepared: &Prepared, seed: u64) -> crate::Result<SeedOutput> {
    let mut rng = stream_rng(seed, 0);
    match prepared {
        Prepared::Relearn { config, initial, reference } => {
            let trace = run_relearn_loop(config, initial, reference.as_ref(), &mut rng)?;
            let last = trace.last().expect("at least one iteration");
            let mut m = vec![
                ("absorbed".to_string(), flag(trace.absorbed_at().is_some())),
                ("absorbed_at".to_string(), trace.absorbed_at().map_or(f64::NAN, |t| t as f64)),
                ("iterations_run".to_string(), trace.rows.len() as f64),
                ("final_max_prob".to_string(), last.dist.probs()[last.dist.argmax()]),
            ];
            if let Some(v) = last.non_retain_mass {
                m.push(("final_non_retain_mass".into(), v));
            }
            if let Some(v) = last.tv_to_retain {
                m.push(("final_tv_to_retain".into(), v));
            }
            if let Some(v) = last.kl_to_reference {
                m.push(("final_kl_to_reference".into(), v));
            }
            Ok((trace.table(seed), m))
        }
        Prepared::Markov { params, chains } => markov_seed(params, chains, seed),
        Prepared::Gmm { params, config } => {
            let setup = two_cluster_setup(&params.retain_center, &params.forget_center, params.points_per_cluster, &mut rng)?;
            let mode = match params.mode {
                GmmModeName::Pure => GmmRelearnMode::Pure,
                GmmModeName::RetainAugmented => GmmRelearnMode::RetainAugmented(setup.retain.clone()),
            };
            let trace = gmm_relearn_loop(&setup.initial, &mode, config, &mut rng)?;
            let first_event = trace.rows.iter().find(|r| r.collapsed || r.diverged).map(|r| r.iteration);
            let last = trace.rows.last().expect("at least one iteration");
            let min_retain = trace.rows.iter().filter_map(|r| r.retain_weight).fold(f64::INFINITY, f64::min);
            let m = vec![
                ("collapsed_or_diverged".to_string(), flag(first_event.is_some())),
                ("first_event_iteration".to_string(), first_event.map_or(f64::NAN, |t| t as f64)),
                (
                    "flagged_iterations".to_string(),
                    trace.rows.iter().filter(|r| r.collapsed || r.diverged).count() as f64,
                ),
                ("iterations_run".to_string(), trace.rows.len() as f64),
                ("final_min_variance".to_string(), last.min_variance),
                ("final_max_variance_ratio".to_string(), last.max_variance_ratio),
                ("final_retain_weight".to_string(), last.retain_weight.unwrap_or(f64::NAN)),
                ("min_retain_weight".to_string(), min_retain),
            ];
            Ok((trace.table(seed), m))
        }
        Prepared::Curated { update, method, selector, iterations, m_curated } => {
            curated_seed(update, *method, *selector, *iterations, *m_curated, seed, &mut rng)
        }
        Prepared::Qa { dataset, model, config } => {
            let (final_model, rows) = run_pmc(model, dataset, config, &mut rng)?;
            let metrics = evaluate_metrics(&final_model, dataset)?;
            let last = rows.last().expect("row 0 always present");
            let m = vec![
                ("unlearn_quality".to_string(), metrics.unlearn_quality),
                ("utility".to_string(), metrics.utility),
                ("forget".to_string(), metrics.forget),
                ("paraphrased".to_string(), metrics.paraphrased),
                ("retain".to_string(), metrics.retain),
                ("heldout".to_string(), metrics.heldout),
                ("forget_truth_mass".to_string(), last.forget_truth_mass),
                ("forget_reward_mean".to_string(), last.forget_reward_mean),
                ("forget_reward_var".to_string(), last.forget_reward_var),
            ];
            Ok((qa_trace_table(&rows, seed), m))
        }
    }
}

fn state_label(counts: &[u32]) -> String {
    counts.iter().map(u32::to_string).collect::<Vec<_>>().join("-")
}

fn markov_seed(params: &MarkovParams, chains: &[(AbsorbingChain, AbsorptionReport)], seed: u64) -> crate::Result<SeedOutput> {
    let mut t = Table::new([
        "seed",
        "n",
        "k",
        "states",
        "transient",
        "central_state",
        "expected_steps_central",
        "max_expected_steps",
        "condition",
        "mc_runs",
        "mc_mean",
        "mc_stderr",
        "mc_not_absorbed",
    ]);
    let mut metrics = Vec::new();
    for (chain, report) in chains {
        let center = chain.central_state();
        let expected = report.steps_from(center);
        let (mut mean, mut stderr, mut missed) = (f64::NAN, f64::NAN, 0u64);
        if params.mc_runs > 0 {
            let mut rng = stream_rng(seed, chain.n() as u64);
            let mut steps = Vec::with_capacity(params.mc_runs as usize);
            for _ in 0..params.mc_runs {
                match simulate_absorption(chain, center, params.max_steps, &mut rng)? {
                    Absorption::Absorbed { steps: s } => steps.push(s as f64),
                    Absorption::NotAbsorbed => missed += 1,
                }
            }
            if !steps.is_empty() {
                let c = steps.len() as f64;
                mean = steps.iter().sum::<f64>() / c;
                let var = steps.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (c - 1.0).max(1.0);
                stderr = (var / c).sqrt();
            }
        }
        t.push(vec![
            seed.to_string(),
            chain.n().to_string(),
            chain.k().to_string(),
            chain.len().to_string(),
            chain.transient_indices().len().to_string(),
            state_label(&chain.states()[center]),
            fmt_real(expected),
            fmt_real(report.max_expected_steps()),
            fmt_real(report.condition),
            params.mc_runs.to_string(),
            fmt_real(mean),
            fmt_real(stderr),
            missed.to_string(),
        ]);
        let n = chain.n();
        metrics.push((format!("expected_steps_n{n}"), expected));
        if params.mc_runs > 0 {
            metrics.push((format!("mc_mean_n{n}"), mean));
            metrics.push((format!("mc_z_n{n}"), (mean - expected) / stderr));
        }
    }
    Ok((t, metrics))
}

fn curated_seed(
    update: &CuratedUpdate,
    method: CuratedMethod,
    selector: Selector,
    iterations: usize,
    m_curated: u64,
    seed: u64,
    rng: &mut crate::rng::SimRng,
) -> crate::Result<SeedOutput> {
    let k = update.base().k();
    let star = update
        .rewards()
        .iter()
        .enumerate()
        .fold(0, |best, (i, &r)| if r > update.rewards()[best] { i } else { best });
    let mut header = vec!["seed".to_string(), "iteration".to_string()];
    header.extend((0..k).map(|i| format!("p{i}")));
    header.extend(["reward_mean", "reward_var", "max_reward_mass"].map(String::from));
    let mut t = Table::new(header);
    let mut current = update.clone();
    let push = |t: &mut Table, it: usize, dist: &Categorical| -> crate::Result<(f64, f64)> {
        let (mean, var) = reward_moments(dist, update.rewards())?;
        let mut row = vec![seed.to_string(), it.to_string()];
        row.extend(dist.probs().iter().map(|&p| fmt_real(p)));
        row.extend([fmt_real(mean), fmt_real(var), fmt_real(dist.probs()[star])]);
        t.push(row);
        Ok((mean, var))
    };
    let mut moments = push(&mut t, 0, current.base())?;
    for it in 1..=iterations {
        let next = match method {
            CuratedMethod::Analytic => apply_hn_update(&current)?,
            CuratedMethod::Sampled => {
                // the update's tau already carries the temperature
                curated_refit_step(current.base(), update.rewards(), update.n(), m_curated, selector, rng)?
            }
        };
        moments = push(&mut t, it, &next)?;
        current = current.with_base(next)?;
    }
    let m = vec![
        ("final_reward_mean".to_string(), moments.0),
        ("final_reward_var".to_string(), moments.1),
        ("final_max_reward_mass".to_string(), current.base().probs()[star]),
        ("max_reward_gap".to_string(), update.rewards()[star].exp() - moments.0),
    ];
    Ok((t, m))
}

fn write_shared_outputs(prepared: &Prepared, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let Prepared::Markov { params, chains } = prepared else {
        return Ok(Vec::new());
    };
    let mut files = Vec::new();
    let mut report = Table::new(["n", "k", "state_index", "state", "absorbing", "expected_steps", "condition"]);
    for (chain, rep) in chains {
        for (i, s) in chain.states().iter().enumerate() {
            let absorbing = chain.is_absorbing(i);
            report.push(vec![
                chain.n().to_string(),
                chain.k().to_string(),
                i.to_string(),
                state_label(s),
                absorbing.to_string(),
                fmt_real(if absorbing { 0.0 } else { rep.steps_from(i) }),
                fmt_real(rep.condition),
            ]);
        }
        if params.write_matrices {
            let mut header = vec!["state".to_string()];
            header.extend(chain.states().iter().map(|s| state_label(s)));
            let mut m = Table::new(header);
            for (i, s) in chain.states().iter().enumerate() {
                let mut row = vec![state_label(s)];
                row.extend(chain.row(i).iter().map(|&p| fmt_real(p)));
                m.push(row);
            }
            let path = dir.join(format!("transition_matrix_n{}_k{}.csv", chain.n(), chain.k()));
            m.write_path(&path).map_err(io_err(path.display()))?;
            files.push(path);
        }
    }
    let path = dir.join("absorption_report.csv");
    report.write_path(&path).map_err(io_err(path.display()))?;
    files.push(path);
    Ok(files)
}

/// Parses a seed list such as `0,1,7` or `0..5` (end exclusive), or a mix.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>, HarnessError> {
    let bad = |part: &str| HarnessError::Config(vec![format!("seeds: cannot parse {part:?}")]);
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad(part))?;
            let b: u64 = b.trim().parse().map_err(|_| bad(part))?;
            seeds.extend(a..b);
        } else {
            seeds.push(part.parse().map_err(|_| bad(part))?);
        }
    }
    Ok(seeds)
}

/// Overrides supplied on the command line.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub out: Option<PathBuf>,
    pub seeds: Option<String>,
    pub workers: Option<usize>,
}

/// Loads `config_path`, checks it matches `command`, applies overrides and runs.
pub fn run_command(command: &str, config_path: &Path, overrides: &CliOverrides) -> Result<RunArtifacts, HarnessError> {
    let mut config = ExperimentConfig::from_path(config_path)?;
    if config.experiment.command() != command {
        return Err(HarnessError::Config(vec![format!(
            "experiment kind {:?} belongs to the `{}` command, not `{command}`",
            config.experiment.kind(),
            config.experiment.command()
        )]));
    }
    if let Some(out) = &overrides.out {
        config.output_dir = out.clone();
    }
    if let Some(seeds) = &overrides.seeds {
        config.seeds = parse_seed_list(seeds)?;
    }
    config.workers = Some(resolve_workers(overrides.workers, config.workers));
    run_experiment(&config)
}
