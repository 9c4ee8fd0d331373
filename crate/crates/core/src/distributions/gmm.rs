use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::linalg::{cholesky, floor_eigenvalues, inverse_logdet, quad_form, sym_eigenvalues};
use super::PROB_SUM_TOL;
use crate::error::{invalid, Result};

/// Lower bound on every covariance eigenvalue.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// One weighted Gaussian; `cov` is `dim × dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl GaussianComponent {
    /// Isotropic component with variance `var` on every axis.
    pub fn isotropic(weight: f64, mean: Vec<f64>, var: f64) -> Self {
        let d = mean.len();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = var;
        }
        Self { weight, mean, cov }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// Smallest covariance eigenvalue.
    pub fn min_variance(&self) -> f64 {
        sym_eigenvalues(&self.cov)[0]
    }

    /// Largest covariance eigenvalue.
    pub fn max_variance(&self) -> f64 {
        *sym_eigenvalues(&self.cov).last().unwrap()
    }
}

/// Gaussian mixture in one or two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    dim: usize,
    components: Vec<GaussianComponent>,
}

impl GmmModel {
    pub fn new(dim: usize, components: Vec<GaussianComponent>) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(invalid(format!("mixture dimension {dim} unsupported, expected 1 or 2")));
        }
        if components.is_empty() {
            return Err(invalid("mixture needs at least one component"));
        }
        let mut total = 0.0;
        for (i, c) in components.iter().enumerate() {
            if !(0.0..=1.0).contains(&c.weight) {
                return Err(invalid(format!("component {i} weight {} outside [0,1]", c.weight)));
            }
            if c.mean.len() != dim || c.cov.len() != dim * dim {
                return Err(invalid(format!("component {i} does not match dimension {dim}")));
            }
            if c.mean.iter().chain(&c.cov).any(|v| !v.is_finite()) {
                return Err(invalid(format!("component {i} has non-finite parameters")));
            }
            if dim == 2 && c.cov[1] != c.cov[2] {
                return Err(invalid(format!("component {i} covariance is not symmetric")));
            }
            let min_eig = c.min_variance();
            if min_eig < VARIANCE_FLOOR * (1.0 - 1e-6) {
                return Err(invalid(format!(
                    "component {i} covariance eigenvalue {min_eig} below floor {VARIANCE_FLOOR}"
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(invalid(format!("mixture weights sum to {total}, expected 1")));
        }
        Ok(Self { dim, components })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    fn log_densities(&self) -> Vec<ComponentLogDensity> {
        self.components.iter().map(ComponentLogDensity::new).collect()
    }
}

/// Precomputed terms of `log(w · N(x; mean, cov))`.
struct ComponentLogDensity {
    log_weight: f64,
    log_norm: f64,
    inv: Vec<f64>,
    mean: Vec<f64>,
}

impl ComponentLogDensity {
    fn new(c: &GaussianComponent) -> Self {
        let d = c.mean.len() as f64;
        let (inv, logdet) = inverse_logdet(&c.cov);
        Self {
            log_weight: c.weight.ln(),
            log_norm: -0.5 * (d * (2.0 * PI).ln() + logdet),
            inv,
            mean: c.mean.clone(),
        }
    }

    fn eval(&self, x: &[f64], diff: &mut [f64]) -> f64 {
        for ((d, xi), mi) in diff.iter_mut().zip(x).zip(&self.mean) {
            *d = xi - mi;
        }
        self.log_weight + self.log_norm - 0.5 * quad_form(&self.inv, diff)
    }
}

/// Points of a common dimension, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut set = Self::new(dim);
        for r in rows {
            set.push(r)?;
        }
        Ok(set)
    }

    pub fn from_1d(values: &[f64]) -> Self {
        Self {
            dim: 1,
            coords: values.to_vec(),
        }
    }

    pub fn push(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(invalid(format!(
                "point of dimension {} pushed into a {}-dimensional set",
                p.len(),
                self.dim
            )));
        }
        self.coords.extend_from_slice(p);
        Ok(())
    }

    pub fn extend(&mut self, other: &PointSet) -> Result<()> {
        if other.dim != self.dim {
            return Err(invalid("point sets differ in dimension"));
        }
        self.coords.extend_from_slice(&other.coords);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.iter() {
            for (mi, pi) in m.iter_mut().zip(p) {
                *mi += pi;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Biased (maximum likelihood) covariance.
    pub fn covariance(&self) -> Vec<f64> {
        let m = self.mean();
        let d = self.dim;
        let mut cov = vec![0.0; d * d];
        for p in self.iter() {
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] += (p[i] - m[i]) * (p[j] - m[j]);
                }
            }
        }
        let n = self.len() as f64;
        cov.iter_mut().for_each(|v| *v /= n);
        cov
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn gmm_pdf(model: &GmmModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim {
        return Err(invalid(format!(
            "point has dimension {}, mixture has {}",
            x.len(),
            model.dim
        )));
    }
    let mut diff = vec![0.0; model.dim];
    Ok(model
        .log_densities()
        .iter()
        .map(|c| c.eval(x, &mut diff).exp())
        .sum())
}

/// Draws a component by inverse CDF over the weights, then a Gaussian point.
pub fn sample_gmm<R: Rng + ?Sized>(model: &GmmModel, n: usize, rng: &mut R) -> Result<PointSet> {
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    let weights = super::Categorical::from_weights(&model.weights())?;
    let picker = weights.sampler();
    let factors: Vec<Vec<f64>> = model.components.iter().map(|c| cholesky(&c.cov)).collect();
    let d = model.dim;
    let mut out = PointSet {
        dim: d,
        coords: Vec::with_capacity(n * d),
    };
    let mut z = [0.0; 2];
    for _ in 0..n {
        let k = picker.draw(rng);
        let c = &model.components[k];
        let l = &factors[k];
        for zi in z.iter_mut().take(d) {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut v = c.mean[i];
            for j in 0..=i {
                v += l[i * d + j] * z[j];
            }
            out.coords.push(v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub enum EmInit {
    /// Warm start from an existing model with the requested component count.
    Model(GmmModel),
    /// Farthest-point (k-means++) seeding of the means from the data.
    KMeansPlusPlus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iterations: usize,
    /// Stop once the mean log-likelihood improves by less than this.
    pub tolerance: f64,
    pub variance_floor: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-8,
            variance_floor: VARIANCE_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularityKind {
    /// Fewer than two effective points assigned to the component.
    FewPoints,
    /// Covariance eigenvalue raised to the floor.
    Floored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularityEvent {
    pub iteration: usize,
    pub component: usize,
    pub effective_points: f64,
    pub kind: SingularityKind,
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: GmmModel,
    /// Mean log-likelihood of the data before the first and after every M-step.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub singularities: Vec<SingularityEvent>,
}

pub fn fit_gmm_em<R: Rng + ?Sized>(
    points: &PointSet,
    k: usize,
    init: EmInit,
    rng: &mut R,
) -> Result<EmFit> {
    fit_gmm_em_with(points, k, init, EmOptions::default(), rng)
}

pub fn fit_gmm_em_with<R: Rng + ?Sized>(
    points: &PointSet,
    k: usize,
    init: EmInit,
    options: EmOptions,
    rng: &mut R,
) -> Result<EmFit> {
    if k == 0 {
        return Err(invalid("component count must be at least 1"));
    }
    if points.len() < k {
        return Err(invalid(format!(
            "{} points cannot support {k} mixture components",
            points.len()
        )));
    }
    if !(1..=2).contains(&points.dim()) {
        return Err(invalid("points must be 1 or 2 dimensional"));
    }
    let mut model = match init {
        EmInit::Model(m) => {
            if m.components.len() != k || m.dim != points.dim() {
                return Err(invalid("initial model does not match k or the data dimension"));
            }
            m
        }
        EmInit::KMeansPlusPlus => kmeans_pp_init(points, k, options.variance_floor, rng),
    };

    let n = points.len();
    let mut resp = vec![0.0; n * k];
    let mut singularities = Vec::new();
    let mut ll = e_step(&model, points, &mut resp);
    let mut log_likelihoods = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..options.max_iterations {
        model = m_step(&model, points, &resp, options.variance_floor, it, &mut singularities);
        iterations = it + 1;
        let next = e_step(&model, points, &mut resp);
        log_likelihoods.push(next);
        let improvement = next - ll;
        ll = next;
        if improvement < options.tolerance {
            converged = true;
            break;
        }
    }
    Ok(EmFit {
        model,
        log_likelihoods,
        iterations,
        converged,
        singularities,
    })
}

/// Fills responsibilities and returns the mean log-likelihood.
fn e_step(model: &GmmModel, points: &PointSet, resp: &mut [f64]) -> f64 {
    let k = model.components.len();
    let comps = model.log_densities();
    let mut diff = vec![0.0; model.dim];
    let mut total = 0.0;
    for (i, x) in points.iter().enumerate() {
        let row = &mut resp[i * k..(i + 1) * k];
        for (r, c) in row.iter_mut().zip(&comps) {
            *r = c.eval(x, &mut diff);
        }
        let lse = log_sum_exp(row);
        total += lse;
        for r in row.iter_mut() {
            *r = (*r - lse).exp();
        }
    }
    total / points.len() as f64
}

fn m_step(
    prev: &GmmModel,
    points: &PointSet,
    resp: &[f64],
    floor: f64,
    iteration: usize,
    events: &mut Vec<SingularityEvent>,
) -> GmmModel {
    let k = prev.components.len();
    let d = prev.dim;
    let n = points.len();
    let mut comps = Vec::with_capacity(k);
    for j in 0..k {
        let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
        let old = &prev.components[j];
        if nk < 2.0 {
            events.push(SingularityEvent {
                iteration,
                component: j,
                effective_points: nk,
                kind: SingularityKind::FewPoints,
            });
        }
        // nothing assigned at all: the component keeps its shape with zero weight
        if !(nk > f64::MIN_POSITIVE) {
            comps.push(GaussianComponent {
                weight: 0.0,
                mean: old.mean.clone(),
                cov: old.cov.clone(),
            });
            continue;
        }
        let mut mean = vec![0.0; d];
        for (i, x) in points.iter().enumerate() {
            let r = resp[i * k + j];
            for (m, xi) in mean.iter_mut().zip(x) {
                *m += r * xi;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut cov = vec![0.0; d * d];
        for (i, x) in points.iter().enumerate() {
            let r = resp[i * k + j];
            for a in 0..d {
                for b in 0..d {
                    cov[a * d + b] += r * (x[a] - mean[a]) * (x[b] - mean[b]);
                }
            }
        }
        cov.iter_mut().for_each(|c| *c /= nk);
        if d == 2 {
            let sym = 0.5 * (cov[1] + cov[2]);
            cov[1] = sym;
            cov[2] = sym;
        }
        if floor_eigenvalues(&mut cov, floor) {
            events.push(SingularityEvent {
                iteration,
                component: j,
                effective_points: nk,
                kind: SingularityKind::Floored,
            });
        }
        comps.push(GaussianComponent {
            weight: nk / n as f64,
            mean,
            cov,
        });
    }
    // responsibilities sum to one per point, so weights only drift by rounding
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    comps.iter_mut().for_each(|c| c.weight /= total);
    GmmModel { dim: d, components: comps }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp_init<R: Rng + ?Sized>(points: &PointSet, k: usize, floor: f64, rng: &mut R) -> GmmModel {
    let n = points.len();
    let mut centers: Vec<Vec<f64>> = vec![points.point(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points.point(idx).to_vec();
        for (di, p) in d2.iter_mut().zip(points.iter()) {
            *di = di.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    let mut cov = points.covariance();
    floor_eigenvalues(&mut cov, floor);
    let w = 1.0 / k as f64;
    GmmModel {
        dim: points.dim(),
        components: centers
            .into_iter()
            .map(|mean| GaussianComponent {
                weight: w,
                mean,
                cov: cov.clone(),
            })
            .collect(),
    }
}
