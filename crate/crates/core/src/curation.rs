//! Reward-based curation of self-generated samples.
//!
//! [`bt_select`] picks one of `n` candidates with softmax probability over
//! `r/τ`; [`argmax_select`] is its zero-temperature limit with first-drawn
//! tie-breaking. [`apply_hn_update`] is the closed-form effect of best-of-n
//! curation on a finite distribution: `p'(x) = p(x)·Hⁿ(x)` with
//!
//! ```text
//! Hⁿ(x) = E_{x_1..x_{n-1} ~ p} [ n·e^{r(x)} / (e^{r(x)} + Σ_i e^{r(x_i)}) ]
//! ```
//!
//! The temperature is folded into the rewards as `r/τ` before evaluation.

use rand::Rng;
use rayon::prelude::*;

use crate::distributions::{fit_categorical_mle, Categorical, SampleCounts};
use crate::error::{invalid, Error, Result};
use crate::rng::stream_rng;

/// Default cap on the number of opponent multisets enumerated exactly.
pub const DEFAULT_HN_TERM_CAP: u128 = 10_000_000;
/// Tuples averaged by the Monte Carlo Hⁿ estimator.
pub const DEFAULT_HN_MC_TUPLES: usize = 100_000;

const CURATION_CHUNK: u64 = 1 << 14;

/// Candidates in draw order, each tagged with an identifier and a reward.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardedCandidates {
    items: Vec<(usize, f64)>,
}

impl RewardedCandidates {
    /// Rewards must be finite and non-negative; the list must be nonempty.
    pub fn new(items: Vec<(usize, f64)>) -> Result<Self> {
        if items.is_empty() {
            return Err(invalid("candidate list is empty"));
        }
        if let Some((id, r)) = items.iter().find(|(_, r)| !r.is_finite() || *r < 0.0) {
            return Err(invalid(format!("candidate {id} has reward {r}, expected a finite value >= 0")));
        }
        Ok(Self { items })
    }

    /// Identifiers are the positions `0..rewards.len()`.
    pub fn from_rewards(rewards: &[f64]) -> Result<Self> {
        Self::new(rewards.iter().copied().enumerate().collect())
    }

    pub fn items(&self) -> &[(usize, f64)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn id(&self, index: usize) -> usize {
        self.items[index].0
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.items.iter().map(|&(_, r)| r)
    }
}

/// How a single curated answer is chosen among `n` drawn candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selector {
    Bt { tau: f64 },
    Argmax,
}

impl Selector {
    fn validate(self) -> Result<()> {
        match self {
            Selector::Bt { tau } if !(tau > 0.0 && tau.is_finite()) => {
                Err(invalid(format!("temperature must be positive and finite, got {tau}")))
            }
            _ => Ok(()),
        }
    }
}

/// Softmax probabilities of `rewards/tau`, shifted by the maximum.
pub fn bt_probabilities(rewards: &[f64], tau: f64) -> Result<Vec<f64>> {
    Selector::Bt { tau }.validate()?;
    if rewards.is_empty() {
        return Err(invalid("candidate list is empty"));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(invalid("non-finite reward"));
    }
    let max = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = rewards.iter().map(|r| ((r - max) / tau).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Index drawn from the softmax of rewards over `tau`.
pub fn bt_select<R: Rng + ?Sized>(candidates: &RewardedCandidates, tau: f64, rng: &mut R) -> Result<usize> {
    Selector::Bt { tau }.validate()?;
    let rewards: Vec<f64> = candidates.rewards().collect();
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(invalid("non-finite reward"));
    }
    Ok(bt_draw(&rewards, tau, rng))
}

/// Lowest draw-order index among the maximizers.
pub fn argmax_select(candidates: &RewardedCandidates) -> usize {
    first_argmax(candidates.rewards())
}

fn first_argmax(rewards: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, r) in rewards.enumerate() {
        if r > best.1 {
            best = (i, r);
        }
    }
    best.0
}

// Caller guarantees finite rewards and a valid tau.
fn bt_draw<R: Rng + ?Sized>(rewards: &[f64], tau: f64, rng: &mut R) -> usize {
    let max = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weight = |r: f64| ((r - max) / tau).exp();
    let total: f64 = rewards.iter().map(|&r| weight(r)).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &r) in rewards.iter().enumerate() {
        let w = weight(r);
        if w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Base distribution, per-answer rewards, comparison-set size and temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct CuratedUpdate {
    base: Categorical,
    rewards: Vec<f64>,
    n: usize,
    tau: f64,
}

impl CuratedUpdate {
    pub fn new(base: Categorical, rewards: Vec<f64>, n: usize, tau: f64) -> Result<Self> {
        if rewards.len() != base.k() {
            return Err(invalid(format!(
                "{} rewards for an answer space of size {}",
                rewards.len(),
                base.k()
            )));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(invalid("rewards must be finite"));
        }
        if n == 0 {
            return Err(invalid("comparison-set size n must be at least 1"));
        }
        Selector::Bt { tau }.validate()?;
        Ok(Self { base, rewards, n, tau })
    }

    pub fn base(&self) -> &Categorical {
        &self.base
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Same rewards, temperature and `n` on a new base.
    pub fn with_base(&self, base: Categorical) -> Result<Self> {
        Self::new(base, self.rewards.clone(), self.n, self.tau)
    }

    // e^{r/τ - max r/τ}; a common factor cancels in every Hⁿ ratio.
    fn scaled_weights(&self) -> Vec<f64> {
        let max = self.rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.rewards.iter().map(|r| ((r - max) / self.tau).exp()).collect()
    }
}

/// How Hⁿ is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HnMethod {
    /// Multiset enumeration; a resource error when the term count exceeds the cap.
    Exact { term_cap: u128 },
    MonteCarlo { tuples: usize },
    /// Exact when within the cap, Monte Carlo otherwise.
    Auto { term_cap: u128, tuples: usize },
}

impl Default for HnMethod {
    fn default() -> Self {
        HnMethod::Exact { term_cap: DEFAULT_HN_TERM_CAP }
    }
}

/// Number of opponent multisets: `C(s + n - 2, n - 1)` for support size `s`.
pub fn hn_term_count(support: usize, n: usize) -> u128 {
    if n <= 1 {
        return 1;
    }
    binomial_saturating((support + n - 2) as u128, (n - 1) as u128)
}

fn binomial_saturating(top: u128, r: u128) -> u128 {
    if r > top {
        return 0;
    }
    let r = r.min(top - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        // acc * (top - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul(top - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Hⁿ for every answer of the update's space.
pub fn hn_weights<R: Rng + ?Sized>(update: &CuratedUpdate, method: HnMethod, rng: &mut R) -> Result<Vec<f64>> {
    let k = update.base.k();
    if update.n == 1 {
        return Ok(vec![1.0; k]);
    }
    match method {
        HnMethod::Exact { term_cap } => hn_exact_capped(update, term_cap),
        HnMethod::Auto { term_cap, .. } if exact_terms(update) <= term_cap => Ok(hn_exact(update)),
        HnMethod::Auto { tuples, .. } | HnMethod::MonteCarlo { tuples } => hn_monte_carlo(update, tuples, rng),
    }
}

fn exact_terms(update: &CuratedUpdate) -> u128 {
    let support = update.base.probs().iter().filter(|&&p| p > 0.0).count();
    hn_term_count(support, update.n)
}

fn hn_exact_capped(update: &CuratedUpdate, term_cap: u128) -> Result<Vec<f64>> {
    let terms = exact_terms(update);
    if terms > term_cap {
        return Err(Error::Resource { what: "exact Hⁿ enumeration", required: terms, cap: term_cap });
    }
    Ok(hn_exact(update))
}

/// Hⁿ for a single answer.
pub fn hn_weight<R: Rng + ?Sized>(x: usize, update: &CuratedUpdate, method: HnMethod, rng: &mut R) -> Result<f64> {
    if x >= update.base.k() {
        return Err(invalid(format!("answer {x} outside a space of size {}", update.base.k())));
    }
    Ok(hn_weights(update, method, rng)?[x])
}

fn hn_exact(update: &CuratedUpdate) -> Vec<f64> {
    if update.n == 1 {
        return vec![1.0; update.base.k()];
    }
    let w = update.scaled_weights();
    let k = w.len();
    let m = update.n - 1;
    let support: Vec<usize> = (0..k).filter(|&j| update.base.probs()[j] > 0.0).collect();
    let ln_p: Vec<f64> = support.iter().map(|&j| update.base.probs()[j].ln()).collect();
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=m).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();

    struct Walk<'a> {
        w: &'a [f64],
        support: &'a [usize],
        ln_p: &'a [f64],
        ln_fact: &'a [f64],
        h: Vec<f64>,
    }
    impl Walk<'_> {
        // Assigns counts to support[pos..] with `left` opponents remaining.
        fn go(&mut self, pos: usize, left: usize, ln_weight: f64, sum_w: f64) {
            let j = self.support[pos];
            if pos + 1 == self.support.len() {
                let c = left;
                let lw = ln_weight + c as f64 * self.ln_p[pos] - self.ln_fact[c];
                let prob = lw.exp();
                let s = sum_w + c as f64 * self.w[j];
                for (hx, &wx) in self.h.iter_mut().zip(self.w) {
                    *hx += prob * wx / (wx + s);
                }
                return;
            }
            for c in 0..=left {
                let lw = ln_weight + c as f64 * self.ln_p[pos] - self.ln_fact[c];
                self.go(pos + 1, left - c, lw, sum_w + c as f64 * self.w[j]);
            }
        }
    }

    let mut walk = Walk { w: &w, support: &support, ln_p: &ln_p, ln_fact: &ln_fact, h: vec![0.0; k] };
    walk.go(0, m, ln_fact[m], 0.0);
    walk.h.into_iter().map(|h| h * update.n as f64).collect()
}

fn hn_monte_carlo<R: Rng + ?Sized>(update: &CuratedUpdate, tuples: usize, rng: &mut R) -> Result<Vec<f64>> {
    if tuples == 0 {
        return Err(invalid("Monte Carlo Hⁿ needs at least one tuple"));
    }
    let w = update.scaled_weights();
    let sampler = update.base.sampler();
    let mut h = vec![0.0; w.len()];
    for _ in 0..tuples {
        let s: f64 = (1..update.n).map(|_| w[sampler.draw(rng)]).sum();
        for (hx, &wx) in h.iter_mut().zip(&w) {
            *hx += wx / (wx + s);
        }
    }
    let scale = update.n as f64 / tuples as f64;
    Ok(h.into_iter().map(|x| x * scale).collect())
}

/// `base·Hⁿ` with exact enumeration under the default cap.
pub fn apply_hn_update(update: &CuratedUpdate) -> Result<Categorical> {
    let h = hn_exact_capped(update, DEFAULT_HN_TERM_CAP)?;
    reweight(update, &h)
}

/// `base·Hⁿ`, renormalized to absorb floating-point drift.
pub fn apply_hn_update_with<R: Rng + ?Sized>(
    update: &CuratedUpdate,
    method: HnMethod,
    rng: &mut R,
) -> Result<Categorical> {
    let h = hn_weights(update, method, rng)?;
    reweight(update, &h)
}

fn reweight(update: &CuratedUpdate, h: &[f64]) -> Result<Categorical> {
    let raw: Vec<f64> = update.base.probs().iter().zip(h).map(|(p, h)| p * h).collect();
    Categorical::from_weights(&raw)
}

/// Empirical distribution of `m_curated` curated answers, each chosen among
/// `n` fresh draws from `base`.
///
/// Draws are split into fixed chunks with their own derived streams, so the
/// result depends only on the rng state and not on the thread count.
pub fn curated_refit_step<R: Rng + ?Sized>(
    base: &Categorical,
    rewards: &[f64],
    n: usize,
    m_curated: u64,
    selector: Selector,
    rng: &mut R,
) -> Result<Categorical> {
    Ok(fit_categorical_mle(&curated_counts(base, rewards, n, m_curated, selector, rng)?))
}

/// Counts behind [`curated_refit_step`].
pub fn curated_counts<R: Rng + ?Sized>(
    base: &Categorical,
    rewards: &[f64],
    n: usize,
    m_curated: u64,
    selector: Selector,
    rng: &mut R,
) -> Result<SampleCounts> {
    if m_curated == 0 {
        return Err(invalid("m_curated must be at least 1"));
    }
    if n == 0 {
        return Err(invalid("comparison-set size n must be at least 1"));
    }
    if rewards.len() != base.k() {
        return Err(invalid(format!("{} rewards for an answer space of size {}", rewards.len(), base.k())));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(invalid("non-finite reward"));
    }
    selector.validate()?;

    let k = base.k();
    let sampler = base.sampler();
    let seed: u64 = rng.random();
    let chunks = m_curated.div_ceil(CURATION_CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c);
            let len = CURATION_CHUNK.min(m_curated - c * CURATION_CHUNK);
            let mut counts = vec![0u64; k];
            let mut drawn = vec![0usize; n];
            let mut cand_rewards = vec![0.0; n];
            for _ in 0..len {
                for (d, r) in drawn.iter_mut().zip(cand_rewards.iter_mut()) {
                    *d = sampler.draw(&mut rng);
                    *r = rewards[*d];
                }
                let pick = match selector {
                    Selector::Argmax => first_argmax(cand_rewards.iter().copied()),
                    Selector::Bt { tau } => bt_draw(&cand_rewards, tau, &mut rng),
                };
                counts[drawn[pick]] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; k],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    SampleCounts::new(counts)
}

/// Mean and variance of `e^r` under `dist`.
pub fn reward_moments(dist: &Categorical, rewards: &[f64]) -> Result<(f64, f64)> {
    if rewards.len() != dist.k() {
        return Err(invalid(format!("{} rewards for an answer space of size {}", rewards.len(), dist.k())));
    }
    let e: Vec<f64> = rewards.iter().map(|r| r.exp()).collect();
    let mean: f64 = dist.probs().iter().zip(&e).map(|(p, x)| p * x).sum();
    let var: f64 = dist
        .probs()
        .iter()
        .zip(&e)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, x)| p * (x - mean).powi(2))
        .sum();
    Ok((mean, var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::total_variation;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    const E: f64 = std::f64::consts::E;

    fn upd(p: &[f64], r: &[f64], n: usize) -> CuratedUpdate {
        CuratedUpdate::new(Categorical::new(p.to_vec()).unwrap(), r.to_vec(), n, 1.0).unwrap()
    }

    fn exact(u: &CuratedUpdate) -> Vec<f64> {
        hn_weights(u, HnMethod::default(), &mut stream_rng(0, 0)).unwrap()
    }

    /// Hⁿ by walking every ordered (n-1)-tuple, independent of the multiset path.
    fn brute_force_hn(p: &[f64], r: &[f64], n: usize, tau: f64) -> Vec<f64> {
        let k = p.len();
        let m = n - 1;
        let mut h = vec![0.0; k];
        let total = k.pow(m as u32);
        for code in 0..total {
            let mut c = code;
            let (mut prob, mut s) = (1.0, 0.0);
            for _ in 0..m {
                let j = c % k;
                c /= k;
                prob *= p[j];
                s += (r[j] / tau).exp();
            }
            for x in 0..k {
                let ex = (r[x] / tau).exp();
                h[x] += prob * n as f64 * ex / (ex + s);
            }
        }
        h
    }

    fn random_instance(rng: &mut impl Rng, max_k: usize, max_n: usize) -> (Vec<f64>, Vec<f64>, usize) {
        let k = rng.random_range(2..=max_k);
        let mut p: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        if rng.random_bool(0.3) {
            p[rng.random_range(0..k)] = 0.0;
        }
        let s: f64 = p.iter().sum();
        let p = p.into_iter().map(|x| x / s).collect();
        let r = (0..k).map(|_| rng.random::<f64>()).collect();
        (p, r, rng.random_range(1..=max_n))
    }

    fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
        let n: u64 = counts.iter().sum();
        let stat: f64 = counts
            .iter()
            .zip(probs)
            .map(|(&c, &p)| {
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        1.0 - ChiSquared::new((probs.len() - 1) as f64).unwrap().cdf(stat)
    }

    #[test]
    fn candidates_validation() {
        assert!(RewardedCandidates::new(vec![]).is_err());
        assert!(RewardedCandidates::from_rewards(&[0.1, f64::NAN]).is_err());
        assert!(RewardedCandidates::from_rewards(&[0.1, f64::INFINITY]).is_err());
        assert!(RewardedCandidates::from_rewards(&[-0.1]).is_err());
        let c = RewardedCandidates::new(vec![(7, 0.5), (3, 0.2)]).unwrap();
        assert_eq!((c.len(), c.id(0), c.id(1)), (2, 7, 3));
    }

    #[test]
    fn bt_rejects_bad_inputs() {
        let c = RewardedCandidates::from_rewards(&[1.0, 0.0]).unwrap();
        let mut rng = stream_rng(1, 0);
        assert!(bt_select(&c, 0.0, &mut rng).is_err());
        assert!(bt_select(&c, -1.0, &mut rng).is_err());
        assert!(bt_select(&c, f64::NAN, &mut rng).is_err());
        assert!(bt_probabilities(&[1.0, f64::NAN], 1.0).is_err());
    }

    #[test]
    fn bt_two_candidate_frequency() {
        let c = RewardedCandidates::from_rewards(&[1.0, 0.0]).unwrap();
        let mut rng = stream_rng(2, 0);
        let draws = 1_000_000;
        let hits = (0..draws).filter(|_| bt_select(&c, 1.0, &mut rng).unwrap() == 0).count();
        let expected = E / (1.0 + E);
        assert!((expected - 0.731059).abs() < 1e-6);
        assert!((hits as f64 / draws as f64 - expected).abs() < 0.002);
    }

    #[test]
    fn bt_equal_rewards_uniform() {
        let c = RewardedCandidates::from_rewards(&[0.4; 5]).unwrap();
        let mut rng = stream_rng(3, 0);
        let mut counts = [0u64; 5];
        for _ in 0..1_000_000 {
            counts[bt_select(&c, 0.7, &mut rng).unwrap()] += 1;
        }
        assert!(chi_square_p(&counts, &[0.2; 5]) > 0.001);
    }

    #[test]
    fn bt_low_temperature_is_argmax() {
        let c = RewardedCandidates::from_rewards(&[0.3, 0.9, 0.1, 0.8999]).unwrap();
        let mut rng = stream_rng(4, 0);
        let hits = (0..1_000_000).filter(|_| bt_select(&c, 1e-6, &mut rng).unwrap() == 1).count();
        assert!(hits as f64 / 1e6 >= 0.999999);
        let probs = bt_probabilities(&[0.3, 0.9, 0.1, 0.8999], 1e-6).unwrap();
        assert!(probs[argmax_select(&c)] >= 1.0 - 1e-4);
    }

    #[test]
    fn bt_matches_softmax_on_random_instances() {
        let mut rng = stream_rng(5, 0);
        for inst in 0..20 {
            let k = rng.random_range(2..=6);
            let rewards: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 2.0).collect();
            let tau = rng.random_range(0.3..2.0);
            let probs = bt_probabilities(&rewards, tau).unwrap();
            let c = RewardedCandidates::from_rewards(&rewards).unwrap();
            let mut draw_rng = stream_rng(6, inst);
            let mut counts = vec![0u64; k];
            for _ in 0..1_000_000 {
                counts[bt_select(&c, tau, &mut draw_rng).unwrap()] += 1;
            }
            assert!(chi_square_p(&counts, &probs) > 0.001, "instance {inst}");
        }
    }

    #[test]
    fn argmax_examples() {
        let f = |r: &[f64]| argmax_select(&RewardedCandidates::from_rewards(r).unwrap());
        assert_eq!(f(&[0.2, 0.9, 0.9]), 1);
        assert_eq!(f(&[0.5]), 0);
        assert_eq!(f(&[0.1, 0.2, 0.3, 0.4]), 3);
    }

    #[test]
    fn update_validation() {
        let b = Categorical::uniform(2).unwrap();
        assert!(CuratedUpdate::new(b.clone(), vec![1.0], 2, 1.0).is_err());
        assert!(CuratedUpdate::new(b.clone(), vec![1.0, f64::NAN], 2, 1.0).is_err());
        assert!(CuratedUpdate::new(b.clone(), vec![1.0, 0.0], 0, 1.0).is_err());
        assert!(CuratedUpdate::new(b, vec![1.0, 0.0], 2, 0.0).is_err());
    }

    #[test]
    fn hn_worked_two_point_instance() {
        let u = upd(&[0.5, 0.5], &[1.0, 0.0], 2);
        let h = exact(&u);
        assert!((h[0] - (0.5 + E / (1.0 + E))).abs() < 1e-12);
        assert!((h[1] - (0.5 + 1.0 / (1.0 + E))).abs() < 1e-12);
        assert!((h[0] - 1.231059).abs() < 1e-6 && (h[1] - 0.768941).abs() < 1e-6);
        assert!((0.5 * h[0] + 0.5 * h[1] - 1.0).abs() < 1e-12);
        let next = apply_hn_update(&u).unwrap();
        assert!((next.probs()[0] - 0.615529).abs() < 1e-6);
        assert!((next.probs()[1] - 0.384471).abs() < 1e-6);
        let mut rng = stream_rng(0, 0);
        assert_eq!(hn_weight(1, &u, HnMethod::default(), &mut rng).unwrap(), h[1]);
        assert!(hn_weight(2, &u, HnMethod::default(), &mut rng).is_err());
    }

    #[test]
    fn hn_trivial_cases() {
        let u = upd(&[0.2, 0.3, 0.5], &[0.1, 0.7, 0.4], 1);
        assert_eq!(exact(&u), vec![1.0; 3]);
        assert_eq!(apply_hn_update(&u).unwrap(), *u.base());
        let c = exact(&upd(&[0.2, 0.3, 0.5], &[0.6; 3], 4));
        assert!(c.iter().all(|h| (h - 1.0).abs() < 1e-12));
    }

    #[test]
    fn hn_multiset_matches_tuple_enumeration() {
        let mut rng = stream_rng(7, 0);
        for _ in 0..200 {
            let (p, r, n) = random_instance(&mut rng, 5, 5);
            let tau = rng.random_range(0.5..2.0);
            let u = CuratedUpdate::new(Categorical::new(p.clone()).unwrap(), r.clone(), n, tau).unwrap();
            let fast = exact(&u);
            let slow = brute_force_hn(&p, &r, n, tau);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn hn_normalization_on_random_instances() {
        let mut rng = stream_rng(8, 0);
        for _ in 0..500 {
            let (p, r, n) = random_instance(&mut rng, 10, 5);
            let u = upd(&p, &r, n);
            let h = exact(&u);
            let total: f64 = p.iter().zip(h).map(|(p, h)| p * h).sum();
            assert!((total - 1.0).abs() < 1e-10, "{total}");
        }
    }

    #[test]
    fn hn_unique_maximizer_is_reinforced() {
        let mut rng = stream_rng(9, 0);
        for _ in 0..500 {
            let (p, r, n) = random_instance(&mut rng, 8, 5);
            let star = first_argmax(r.iter().copied());
            if r.iter().filter(|&&x| x == r[star]).count() > 1 {
                continue;
            }
            let u = upd(&p, &r, n);
            assert!(exact(&u)[star] >= 1.0 - 1e-12);
            let next = apply_hn_update(&u).unwrap();
            assert!(next.probs()[star] >= p[star] * (1.0 - 1e-12));
        }
    }

    #[test]
    fn term_count_and_cap() {
        assert_eq!(hn_term_count(8, 1), 1);
        assert_eq!(hn_term_count(8, 2), 8);
        assert_eq!(hn_term_count(8, 4), 120);
        assert_eq!(hn_term_count(2, 11), 11);
        assert_eq!(hn_term_count(3, 4), 10);
        let u = upd(&[0.25; 4], &[0.0, 0.1, 0.2, 0.3], 6);
        let mut rng = stream_rng(10, 0);
        let err = hn_weights(&u, HnMethod::Exact { term_cap: 10 }, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Resource { required: 56, cap: 10, .. }));
        let auto = hn_weights(&u, HnMethod::Auto { term_cap: 10, tuples: 200_000 }, &mut rng).unwrap();
        for (a, b) in auto.iter().zip(exact(&u)) {
            assert!((a - b).abs() < 0.01);
        }
    }

    #[test]
    fn zero_mass_answers_keep_zero_mass() {
        let u = upd(&[0.0, 0.6, 0.4], &[1.0, 0.2, 0.5], 3);
        let next = apply_hn_update(&u).unwrap();
        assert_eq!(next.probs()[0], 0.0);
        assert!(next.probs()[2] > 0.4);
    }

    #[test]
    fn eight_answer_iteration_concentrates_on_best() {
        let rewards: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
        let mut u = upd(&[0.125; 8], &rewards, 4);
        for _ in 0..200 {
            u = u.with_base(apply_hn_update(&u).unwrap()).unwrap();
        }
        assert!(u.base().probs()[7] >= 0.999);
        let (_, var) = reward_moments(u.base(), &rewards).unwrap();
        assert!(var <= 1e-3);
    }

    #[test]
    fn expected_reward_climbs_to_maximum() {
        // rewards on a 0.05 grid keep the top gap away from zero
        let mut rng = stream_rng(11, 0);
        for inst in 0..100 {
            let k = rng.random_range(2..=8);
            let mut grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
            grid.shuffle(&mut rng);
            let rewards = grid[..k].to_vec();
            let p: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let base = Categorical::from_weights(&p).unwrap();
            let n = rng.random_range(2..=5);
            let mut u = CuratedUpdate::new(base, rewards.clone(), n, 1.0).unwrap();
            let mut mean = reward_moments(u.base(), &rewards).unwrap().0;
            for _ in 0..500 {
                u = u.with_base(apply_hn_update(&u).unwrap()).unwrap();
                let next = reward_moments(u.base(), &rewards).unwrap().0;
                assert!(next >= mean - 1e-12, "instance {inst}");
                mean = next;
            }
            let r_star = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(r_star.exp() - mean <= 1e-3, "instance {inst}: gap {}", r_star.exp() - mean);
        }
    }

    #[test]
    fn reward_moment_examples() {
        let (m, v) = reward_moments(&Categorical::uniform(2).unwrap(), &[0.0, 1.0]).unwrap();
        assert!((m - (1.0 + E) / 2.0).abs() < 1e-12 && (m - 1.859141).abs() < 1e-6);
        assert!((v - ((E - 1.0) / 2.0).powi(2)).abs() < 1e-12 && (v - 0.738123).abs() < 1e-6);
        let (m, v) = reward_moments(&Categorical::one_hot(3, 1).unwrap(), &[0.1, 0.7, 0.3]).unwrap();
        assert_eq!((m, v), (0.7f64.exp(), 0.0));
        let (m, v) = reward_moments(&Categorical::new(vec![0.3, 0.7]).unwrap(), &[0.4, 0.4]).unwrap();
        assert!((m - 0.4f64.exp()).abs() < 1e-15 && v < 1e-30);
        assert!(reward_moments(&Categorical::uniform(2).unwrap(), &[0.0]).is_err());
    }

    #[test]
    fn refit_with_n1_estimates_base() {
        let base = Categorical::from_weights(&[1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let rewards = [0.9, 0.1, 0.5, 0.3, 0.2, 0.8, 0.4, 0.6];
        let mut rng = stream_rng(12, 0);
        let fit = curated_refit_step(&base, &rewards, 1, 100_000, Selector::Argmax, &mut rng).unwrap();
        assert!(total_variation(&fit, &base).unwrap() <= 0.02);
    }

    #[test]
    fn refit_one_hot_stays_one_hot() {
        let base = Categorical::one_hot(5, 3).unwrap();
        let mut rng = stream_rng(13, 0);
        let fit = curated_refit_step(&base, &[0.1; 5], 3, 1000, Selector::Bt { tau: 1.0 }, &mut rng).unwrap();
        assert_eq!(fit, base);
    }

    #[test]
    fn refit_matches_exact_update() {
        let base = Categorical::from_weights(&[3.0, 1.0, 2.0, 1.0, 4.0, 2.0, 1.0, 2.0]).unwrap();
        let rewards = [0.2, 0.9, 0.4, 0.7, 0.0, 0.5, 1.0, 0.3];
        let exact = apply_hn_update(&CuratedUpdate::new(base.clone(), rewards.to_vec(), 4, 1.0).unwrap()).unwrap();
        let mut rng = stream_rng(14, 0);
        let fit = curated_refit_step(&base, &rewards, 4, 1_000_000, Selector::Bt { tau: 1.0 }, &mut rng).unwrap();
        assert!(total_variation(&fit, &exact).unwrap() <= 0.005);
    }

    #[test]
    fn refit_is_deterministic_and_validates() {
        let base = Categorical::uniform(4).unwrap();
        let r = [0.1, 0.4, 0.2, 0.3];
        let a = curated_refit_step(&base, &r, 3, 50_000, Selector::Argmax, &mut stream_rng(15, 0)).unwrap();
        let b = curated_refit_step(&base, &r, 3, 50_000, Selector::Argmax, &mut stream_rng(15, 0)).unwrap();
        assert_eq!(a, b);
        let mut rng = stream_rng(15, 1);
        assert!(curated_refit_step(&base, &r, 3, 0, Selector::Argmax, &mut rng).is_err());
        assert!(curated_refit_step(&base, &r, 0, 10, Selector::Argmax, &mut rng).is_err());
        assert!(curated_refit_step(&base, &r[..3], 3, 10, Selector::Argmax, &mut rng).is_err());
        assert!(curated_refit_step(&base, &r, 3, 10, Selector::Bt { tau: 0.0 }, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn bt_probabilities_are_shift_invariant(r in prop::collection::vec(0.0f64..3.0, 1..8), shift in -5.0f64..5.0, tau in 0.1f64..3.0) {
            let a = bt_probabilities(&r, tau).unwrap();
            let shifted: Vec<f64> = r.iter().map(|x| x + shift).collect();
            let b = bt_probabilities(&shifted, tau).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
