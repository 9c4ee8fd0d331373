//! Relearning loops: pure self-relearning, retain-augmented relearning, and
//! the analytic mixture recursion, for categoricals and Gaussian mixtures.
//!
//! The mixing weight is called `alpha` throughout; it is the same quantity
//! sometimes written λ for the recursion
//! `p_{t+1} = alpha/(1+alpha) · p_r + 1/(1+alpha) · p_t`.

use rand::Rng;

use crate::distributions::{
    fit_categorical_mle, fit_gmm_em_with, kl_divergence, sample_categorical, sample_gmm,
    total_variation, Categorical, EmInit, EmOptions, GmmModel, PointSet, SampleCounts,
    VARIANCE_FLOOR,
};
use crate::error::{invalid, Result};
use crate::table::{fmt_opt, fmt_real, Table};

/// Refit on `n` fresh samples from the current distribution.
pub fn relearn_step_pure<R: Rng + ?Sized>(current: &Categorical, n: u64, rng: &mut R) -> Result<Categorical> {
    Ok(fit_categorical_mle(&sample_categorical(current, n, rng)?))
}

/// Refit on the retain counts concatenated with `n` fresh samples.
pub fn relearn_step_retain<R: Rng + ?Sized>(
    current: &Categorical,
    retain: &SampleCounts,
    n: u64,
    rng: &mut R,
) -> Result<Categorical> {
    if retain.k() != current.k() {
        return Err(invalid(format!(
            "retain counts have K={}, distribution has K={}",
            retain.k(),
            current.k()
        )));
    }
    let generated = sample_categorical(current, n, rng)?;
    Ok(fit_categorical_mle(&retain.combine(&generated)?))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(invalid(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    Ok(())
}

/// One step of `p_{t+1} = alpha/(1+alpha) · p_r + 1/(1+alpha) · p_t`.
pub fn analytic_mixture_step(p_t: &Categorical, p_r: &Categorical, alpha: f64) -> Result<Categorical> {
    check_alpha(alpha)?;
    if p_t.k() != p_r.k() {
        return Err(invalid(format!("mixing K={} with K={}", p_t.k(), p_r.k())));
    }
    let w_r = alpha / (1.0 + alpha);
    let w_t = 1.0 / (1.0 + alpha);
    Ok(Categorical::from_probs_unchecked(
        p_r.probs()
            .iter()
            .zip(p_t.probs())
            .map(|(r, t)| w_r * r + w_t * t)
            .collect(),
    ))
}

/// `p_t = [1 - c^t] p_r + c^t p_0` with `c = 1/(1+alpha)`.
pub fn closed_form_pt(p_0: &Categorical, p_r: &Categorical, alpha: f64, t: u32) -> Result<Categorical> {
    check_alpha(alpha)?;
    if p_0.k() != p_r.k() {
        return Err(invalid(format!("mixing K={} with K={}", p_0.k(), p_r.k())));
    }
    let c = (1.0 / (1.0 + alpha)).powi(t as i32);
    Ok(Categorical::from_probs_unchecked(
        p_r.probs()
            .iter()
            .zip(p_0.probs())
            .map(|(r, p)| (1.0 - c) * r + c * p)
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub enum RelearnMode {
    /// Refit on self-generated samples only.
    Pure,
    /// Refit on fixed retain counts plus self-generated samples.
    RetainAugmented { retain: SampleCounts },
    /// Exact mixture recursion toward the retain distribution.
    AnalyticMixture { retain: Categorical, alpha: f64 },
}

impl RelearnMode {
    pub fn name(&self) -> &'static str {
        match self {
            RelearnMode::Pure => "pure",
            RelearnMode::RetainAugmented { .. } => "retain_augmented",
            RelearnMode::AnalyticMixture { .. } => "analytic_mixture",
        }
    }

    /// Categories the retain data covers, if any.
    fn retain_mask(&self) -> Option<Vec<bool>> {
        match self {
            RelearnMode::Pure => None,
            RelearnMode::RetainAugmented { retain } => Some(retain.counts().iter().map(|&c| c > 0).collect()),
            RelearnMode::AnalyticMixture { retain, .. } => Some(retain.probs().iter().map(|&p| p > 0.0).collect()),
        }
    }

    fn retain_distribution(&self) -> Option<Categorical> {
        match self {
            RelearnMode::Pure => None,
            RelearnMode::RetainAugmented { retain } => Some(fit_categorical_mle(retain)),
            RelearnMode::AnalyticMixture { retain, .. } => Some(retain.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelearnConfig {
    pub mode: RelearnMode,
    /// Self-generated samples per iteration; unused by the analytic mode.
    pub n_generated: u64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub dist: Categorical,
    /// Mass outside the retain categories.
    pub non_retain_mass: Option<f64>,
    pub kl_to_reference: Option<f64>,
    /// Total variation to the retain distribution.
    pub tv_to_retain: Option<f64>,
    pub absorbed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelearnTrace {
    pub mode: &'static str,
    pub rows: Vec<TraceRow>,
}

impl RelearnTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// First iteration flagged absorbed.
    pub fn absorbed_at(&self) -> Option<usize> {
        self.rows.iter().find(|r| r.absorbed).map(|r| r.iteration)
    }

    pub fn table(&self, seed: u64) -> Table {
        let k = self.rows.first().map_or(0, |r| r.dist.k());
        let mut header: Vec<String> = vec!["iteration".into(), "mode".into(), "seed".into()];
        header.extend((0..k).map(|i| format!("p{i}")));
        header.extend(
            ["non_retain_mass", "tv_to_retain", "kl_to_reference", "absorbed"]
                .iter()
                .map(|s| s.to_string()),
        );
        let mut t = Table::new(header);
        for r in &self.rows {
            let mut row = vec![r.iteration.to_string(), self.mode.to_string(), seed.to_string()];
            row.extend(r.dist.probs().iter().map(|&p| fmt_real(p)));
            row.push(fmt_opt(r.non_retain_mass));
            row.push(fmt_opt(r.tv_to_retain));
            row.push(fmt_opt(r.kl_to_reference));
            row.push(r.absorbed.to_string());
            t.push(row);
        }
        t
    }
}

/// Runs `config.iterations` steps of the selected mode from `initial`,
/// recording one row per step. Pure mode stops early once one-hot.
/// `reference` is the distribution the KL column is measured against.
pub fn run_relearn_loop<R: Rng + ?Sized>(
    config: &RelearnConfig,
    initial: &Categorical,
    reference: Option<&Categorical>,
    rng: &mut R,
) -> Result<RelearnTrace> {
    if let Some(r) = reference {
        if r.k() != initial.k() {
            return Err(invalid("reference distribution does not match K"));
        }
    }
    let sampling = !matches!(config.mode, RelearnMode::AnalyticMixture { .. });
    if sampling && config.n_generated == 0 {
        return Err(invalid("n_generated must be at least 1"));
    }
    match &config.mode {
        RelearnMode::RetainAugmented { retain } if retain.k() != initial.k() => {
            return Err(invalid("retain counts do not match K"));
        }
        RelearnMode::AnalyticMixture { retain, alpha } => {
            check_alpha(*alpha)?;
            if retain.k() != initial.k() {
                return Err(invalid("retain distribution does not match K"));
            }
        }
        _ => {}
    }

    let mask = config.mode.retain_mask();
    let retain_dist = config.mode.retain_distribution();
    let mut current = initial.clone();
    let mut rows = Vec::with_capacity(config.iterations);
    for iteration in 1..=config.iterations {
        current = match &config.mode {
            RelearnMode::Pure => relearn_step_pure(&current, config.n_generated, rng)?,
            RelearnMode::RetainAugmented { retain } => {
                relearn_step_retain(&current, retain, config.n_generated, rng)?
            }
            RelearnMode::AnalyticMixture { retain, alpha } => analytic_mixture_step(&current, retain, *alpha)?,
        };
        let non_retain_mass = mask.as_ref().map(|m| {
            current
                .probs()
                .iter()
                .zip(m)
                .filter(|(_, keep)| !**keep)
                .fold(0.0, |acc, (p, _)| acc + p)
        });
        let absorbed = match config.mode {
            RelearnMode::Pure => current.is_one_hot(),
            RelearnMode::RetainAugmented { .. } => non_retain_mass == Some(0.0),
            RelearnMode::AnalyticMixture { .. } => false,
        };
        rows.push(TraceRow {
            iteration,
            non_retain_mass,
            kl_to_reference: reference.map(|r| kl_divergence(&current, r)).transpose()?,
            tv_to_retain: retain_dist.as_ref().map(|r| total_variation(&current, r)).transpose()?,
            absorbed,
            dist: current.clone(),
        });
        if absorbed && config.mode == RelearnMode::Pure {
            break;
        }
    }
    Ok(RelearnTrace {
        mode: config.mode.name(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum GmmRelearnMode {
    Pure,
    RetainAugmented(PointSet),
}

impl GmmRelearnMode {
    pub fn name(&self) -> &'static str {
        match self {
            GmmRelearnMode::Pure => "pure",
            GmmRelearnMode::RetainAugmented(_) => "retain_augmented",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmRelearnConfig {
    /// Self-generated points per iteration.
    pub n: usize,
    pub iterations: usize,
    /// Components whose mean lies within `retain_radius` of this point count
    /// toward the retain-region weight.
    pub retain_center: Option<Vec<f64>>,
    pub retain_radius: f64,
    /// Collapse threshold on a component's smallest covariance eigenvalue.
    pub collapse_variance: f64,
    /// Divergence threshold, as a multiple of the component's initial largest variance.
    pub divergence_factor: f64,
    /// Stop at the first collapse or divergence.
    pub stop_on_collapse: bool,
    pub em: EmOptions,
}

impl Default for GmmRelearnConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            iterations: 100,
            retain_center: None,
            retain_radius: 1.0,
            collapse_variance: VARIANCE_FLOOR * (1.0 + 1e-6),
            divergence_factor: 10.0,
            stop_on_collapse: false,
            em: EmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmTraceRow {
    pub iteration: usize,
    pub model: GmmModel,
    pub min_variance: f64,
    pub max_variance: f64,
    /// Largest ratio of a component's variance to its initial variance.
    /// Variance summaries skip components with zero weight.
    pub max_variance_ratio: f64,
    pub retain_weight: Option<f64>,
    pub em_iterations: usize,
    pub singularities: usize,
    pub log_likelihood: f64,
    pub collapsed: bool,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmTrace {
    pub mode: &'static str,
    pub collapse_variance: f64,
    pub divergence_factor: f64,
    pub rows: Vec<GmmTraceRow>,
}

impl GmmTrace {
    pub fn collapsed_or_diverged(&self) -> bool {
        self.rows.iter().any(|r| r.collapsed || r.diverged)
    }

    pub fn table(&self, seed: u64) -> Table {
        let model = self.rows.first().map(|r| &r.model);
        let (k, d) = model.map_or((0, 0), |m| (m.components().len(), m.dim()));
        let mut header: Vec<String> = vec!["iteration".into(), "mode".into(), "seed".into()];
        for j in 0..k {
            header.push(format!("w{j}"));
            header.extend((0..d).map(|a| format!("mean{j}_{a}")));
            header.extend((0..d * d).map(|a| format!("cov{j}_{a}")));
        }
        header.extend(
            [
                "min_variance",
                "max_variance",
                "max_variance_ratio",
                "retain_weight",
                "em_iterations",
                "singularities",
                "log_likelihood",
                "collapse_threshold",
                "divergence_factor",
                "collapsed",
                "diverged",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        let mut t = Table::new(header);
        for r in &self.rows {
            let mut row = vec![r.iteration.to_string(), self.mode.to_string(), seed.to_string()];
            for c in r.model.components() {
                row.push(fmt_real(c.weight));
                row.extend(c.mean.iter().map(|&v| fmt_real(v)));
                row.extend(c.cov.iter().map(|&v| fmt_real(v)));
            }
            row.push(fmt_real(r.min_variance));
            row.push(fmt_real(r.max_variance));
            row.push(fmt_real(r.max_variance_ratio));
            row.push(fmt_opt(r.retain_weight));
            row.push(r.em_iterations.to_string());
            row.push(r.singularities.to_string());
            row.push(fmt_real(r.log_likelihood));
            row.push(fmt_real(self.collapse_variance));
            row.push(fmt_real(self.divergence_factor));
            row.push(r.collapsed.to_string());
            row.push(r.diverged.to_string());
            t.push(row);
        }
        t
    }
}

/// Iteratively refits a mixture on its own samples (optionally concatenated
/// with retain points), warm-starting EM from the previous model.
pub fn gmm_relearn_loop<R: Rng + ?Sized>(
    initial: &GmmModel,
    mode: &GmmRelearnMode,
    config: &GmmRelearnConfig,
    rng: &mut R,
) -> Result<GmmTrace> {
    if config.n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if let GmmRelearnMode::RetainAugmented(retain) = mode {
        if retain.is_empty() {
            return Err(invalid("retain-augmented relearning needs retain points"));
        }
        if retain.dim() != initial.dim() {
            return Err(invalid("retain points do not match the mixture dimension"));
        }
    }
    if let Some(c) = &config.retain_center {
        if c.len() != initial.dim() {
            return Err(invalid("retain center does not match the mixture dimension"));
        }
    }
    let k = initial.components().len();
    let initial_var: Vec<f64> = initial.components().iter().map(|c| c.max_variance()).collect();
    let mut model = initial.clone();
    let mut rows = Vec::with_capacity(config.iterations);
    for iteration in 1..=config.iterations {
        let mut data = sample_gmm(&model, config.n, rng)?;
        if let GmmRelearnMode::RetainAugmented(retain) = mode {
            data.extend(retain)?;
        }
        let fit = fit_gmm_em_with(&data, k, EmInit::Model(model), config.em, rng)?;
        model = fit.model;
        let comps = model.components();
        // zero-weight components are not part of the distribution
        let live = || comps.iter().zip(&initial_var).filter(|(c, _)| c.weight > 0.0);
        let min_variance = live().map(|(c, _)| c.min_variance()).fold(f64::INFINITY, f64::min);
        let max_variance = live().map(|(c, _)| c.max_variance()).fold(0.0, f64::max);
        let max_variance_ratio = live().map(|(c, v0)| c.max_variance() / v0).fold(0.0, f64::max);
        let retain_weight = config.retain_center.as_ref().map(|center| {
            comps
                .iter()
                .filter(|c| {
                    c.mean
                        .iter()
                        .zip(center)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                        <= config.retain_radius
                })
                .fold(0.0, |acc, c| acc + c.weight)
        });
        let collapsed = min_variance <= config.collapse_variance;
        let diverged = max_variance_ratio > config.divergence_factor;
        rows.push(GmmTraceRow {
            iteration,
            min_variance,
            max_variance,
            max_variance_ratio,
            retain_weight,
            em_iterations: fit.iterations,
            singularities: fit.singularities.len(),
            log_likelihood: *fit.log_likelihoods.last().unwrap(),
            collapsed,
            diverged,
            model: model.clone(),
        });
        if config.stop_on_collapse && (collapsed || diverged) {
            break;
        }
    }
    Ok(GmmTrace {
        mode: mode.name(),
        collapse_variance: config.collapse_variance,
        divergence_factor: config.divergence_factor,
        rows,
    })
}

/// Retain and forget point clouds drawn from two isotropic unit Gaussians,
/// and the two-component mixture EM fits to their union.
#[derive(Debug, Clone)]
pub struct TwoClusterSetup {
    pub retain: PointSet,
    pub forget: PointSet,
    pub initial: GmmModel,
}

pub fn two_cluster_setup<R: Rng + ?Sized>(
    retain_center: &[f64],
    forget_center: &[f64],
    points_per_cluster: usize,
    rng: &mut R,
) -> Result<TwoClusterSetup> {
    use crate::distributions::{fit_gmm_em, GaussianComponent};
    if retain_center.len() != forget_center.len() {
        return Err(invalid("cluster centers differ in dimension"));
    }
    let dim = retain_center.len();
    let cloud = |center: &[f64], rng: &mut R| -> Result<PointSet> {
        let m = GmmModel::new(dim, vec![GaussianComponent::isotropic(1.0, center.to_vec(), 1.0)])?;
        sample_gmm(&m, points_per_cluster, rng)
    };
    let retain = cloud(retain_center, rng)?;
    let forget = cloud(forget_center, rng)?;
    let mut joint = retain.clone();
    joint.extend(&forget)?;
    let initial = fit_gmm_em(&joint, 2, EmInit::KMeansPlusPlus, rng)?.model;
    Ok(TwoClusterSetup {
        retain,
        forget,
        initial,
    })
}
