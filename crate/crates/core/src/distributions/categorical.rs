use rand::Rng;

use crate::error::{invalid, Result};

/// Allowed deviation of a probability vector's sum from 1.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Probability vector over `K` categories.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("categorical needs at least one category"));
        }
        if let Some((k, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(invalid(format!("probability {k} is {p}, expected a finite value >= 0")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(invalid(format!("probabilities sum to {sum}, expected 1")));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(invalid("weights must have positive total"));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("categorical needs at least one category"));
        }
        Ok(Self {
            probs: vec![1.0 / k as f64; k],
        })
    }

    pub fn one_hot(k: usize, index: usize) -> Result<Self> {
        if index >= k {
            return Err(invalid(format!("one-hot index {index} out of range for K={k}")));
        }
        let mut probs = vec![0.0; k];
        probs[index] = 1.0;
        Ok(Self { probs })
    }

    /// Skips validation; callers guarantee a convex combination or exact ratio.
    pub(crate) fn from_probs_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    /// The category holding all mass, if the distribution is collapsed.
    pub fn one_hot_index(&self) -> Option<usize> {
        let mut hot = None;
        for (k, &p) in self.probs.iter().enumerate() {
            if p == 1.0 {
                hot = Some(k);
            } else if p != 0.0 {
                return None;
            }
        }
        hot
    }

    pub fn is_one_hot(&self) -> bool {
        self.one_hot_index().is_some()
    }

    /// Most probable category, ties toward the lower index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }

    pub fn sampler(&self) -> CategoricalSampler {
        CategoricalSampler::new(self)
    }
}

/// Inverse-CDF sampler over a precomputed cumulative vector.
#[derive(Debug, Clone)]
pub struct CategoricalSampler {
    cumulative: Vec<f64>,
    last_positive: usize,
    fixed: Option<usize>,
}

impl CategoricalSampler {
    pub fn new(dist: &Categorical) -> Self {
        let mut acc = 0.0;
        let cumulative = dist
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let last_positive = dist.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Self {
            cumulative,
            last_positive,
            fixed: dist.one_hot_index(),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if let Some(k) = self.fixed {
            return k;
        }
        let u: f64 = rng.random();
        // first index whose cumulative mass exceeds u; zero-mass categories never qualify
        let k = self.cumulative.partition_point(|&c| c <= u);
        k.min(self.last_positive)
    }
}

/// Per-category counts of a sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleCounts {
    counts: Vec<u64>,
    n: u64,
}

impl SampleCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(invalid("counts need at least one category"));
        }
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(invalid("counts have zero total"));
        }
        Ok(Self { counts, n })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    /// Elementwise sum of two count vectors over the same categories.
    pub fn combine(&self, other: &SampleCounts) -> Result<SampleCounts> {
        if self.k() != other.k() {
            return Err(invalid(format!(
                "count vectors have K={} and K={}",
                self.k(),
                other.k()
            )));
        }
        Ok(SampleCounts {
            counts: self
                .counts
                .iter()
                .zip(&other.counts)
                .map(|(a, b)| a + b)
                .collect(),
            n: self.n + other.n,
        })
    }
}

/// Maximum likelihood estimate `n_k / n`.
pub fn fit_categorical_mle(counts: &SampleCounts) -> Categorical {
    let n = counts.n as f64;
    Categorical::from_probs_unchecked(counts.counts.iter().map(|&c| c as f64 / n).collect())
}

pub fn sample_categorical<R: Rng + ?Sized>(
    dist: &Categorical,
    n: u64,
    rng: &mut R,
) -> Result<SampleCounts> {
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    let mut counts = vec![0u64; dist.k()];
    let sampler = dist.sampler();
    if let Some(k) = sampler.fixed {
        counts[k] = n;
    } else {
        for _ in 0..n {
            counts[sampler.draw(rng)] += 1;
        }
    }
    Ok(SampleCounts { counts, n })
}

/// Discrete KL divergence in nats; `+inf` when `p` has mass outside the support of `q`.
pub fn kl_divergence(p: &Categorical, q: &Categorical) -> Result<f64> {
    if p.k() != q.k() {
        return Err(invalid(format!("KL between K={} and K={}", p.k(), q.k())));
    }
    let mut kl = 0.0;
    for (&pk, &qk) in p.probs.iter().zip(&q.probs) {
        if pk == 0.0 {
            continue;
        }
        if qk == 0.0 {
            return Ok(f64::INFINITY);
        }
        kl += pk * (pk / qk).ln();
    }
    // rounding can push a true zero slightly negative
    Ok(kl.max(0.0))
}

pub fn total_variation(p: &Categorical, q: &Categorical) -> Result<f64> {
    if p.k() != q.k() {
        return Err(invalid(format!("TV between K={} and K={}", p.k(), q.k())));
    }
    Ok(0.5
        * p.probs
            .iter()
            .zip(&q.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}
