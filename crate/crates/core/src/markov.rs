//! Iterative relearning of a categorical distribution from `n` samples as an
//! absorbing Markov chain.
//!
//! A state is the count vector of the last sample (so the refit distribution
//! is `counts / n`). Row `i` of the transition matrix is the multinomial PMF
//! of drawing each count vector with probabilities `state_i / n`. The `K`
//! one-hot states are absorbing; every other state is transient, and the
//! expected number of refits until collapse solves `(I - Q) t = 1` where `Q`
//! is the transient block.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{invalid, Error, Result};

/// Largest state space built by default. A dense chain stores two `S × S`
/// matrices, so this keeps memory below a gigabyte.
pub const DEFAULT_STATE_CAP: usize = 5_000;

/// Number of count vectors of length `k` summing to `n`, `C(n+k-1, k-1)`.
/// Saturates at `u128::MAX`.
pub fn state_count(n: u64, k: usize) -> u128 {
    let mut acc: u128 = 1;
    let r = (k as u128).saturating_sub(1);
    let top = n as u128 + r;
    for i in 0..r {
        // acc * (top - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul(top - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All count vectors of length `k` summing to `n`, in ascending lexicographic order.
fn enumerate_states(n: u32, k: usize) -> Vec<Vec<u32>> {
    fn rec(remaining: u32, slots: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in 0..=remaining {
            prefix.push(c);
            rec(remaining - c, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

fn ln_factorials(n: u32) -> Vec<f64> {
    let mut t = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    t.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        t.push(acc);
    }
    t
}

/// Multinomial probability of `target` counts given source counts (both summing to `n`).
fn multinomial_pmf(target: &[u32], source: &[u32], n: u32, ln_fact: &[f64]) -> f64 {
    let nf = n as f64;
    let mut log_p = ln_fact[n as usize];
    for (&c, &s) in target.iter().zip(source) {
        if c == 0 {
            continue;
        }
        if s == 0 {
            return 0.0;
        }
        log_p += c as f64 * (s as f64 / nf).ln() - ln_fact[c as usize];
    }
    log_p.exp()
}

#[derive(Debug, Clone)]
pub struct AbsorbingChain {
    n: u32,
    k: usize,
    states: Vec<Vec<u32>>,
    /// Row-major `S × S`.
    transition: Vec<f64>,
    cumulative: Vec<f64>,
    absorbing: Vec<usize>,
    transient: Vec<usize>,
}

pub fn build_transition_matrix(n: u32, k: usize) -> Result<AbsorbingChain> {
    build_transition_matrix_capped(n, k, DEFAULT_STATE_CAP)
}

pub fn build_transition_matrix_capped(n: u32, k: usize, cap: usize) -> Result<AbsorbingChain> {
    if n == 0 {
        return Err(invalid("sample size n must be at least 1"));
    }
    if k < 2 {
        return Err(invalid("category count k must be at least 2"));
    }
    let s = state_count(n as u64, k);
    if s > cap as u128 {
        return Err(Error::Resource {
            what: "absorbing chain states",
            required: s,
            cap: cap as u128,
        });
    }
    let states = enumerate_states(n, k);
    let size = states.len();
    debug_assert_eq!(size as u128, s);
    let ln_fact = ln_factorials(n);

    let mut transition = vec![0.0; size * size];
    let mut cumulative = vec![0.0; size * size];
    let mut absorbing = Vec::new();
    let mut transient = Vec::new();
    for (i, src) in states.iter().enumerate() {
        let row = &mut transition[i * size..(i + 1) * size];
        if src.iter().any(|&c| c == n) {
            row[i] = 1.0;
            absorbing.push(i);
        } else {
            for (j, dst) in states.iter().enumerate() {
                row[j] = multinomial_pmf(dst, src, n, &ln_fact);
            }
            transient.push(i);
        }
        let mut acc = 0.0;
        for (c, p) in cumulative[i * size..(i + 1) * size].iter_mut().zip(row.iter()) {
            acc += p;
            *c = acc;
        }
    }
    Ok(AbsorbingChain {
        n,
        k,
        states,
        transition,
        cumulative,
        absorbing,
        transient,
    })
}

impl AbsorbingChain {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    pub fn state_index(&self, counts: &[u32]) -> Option<usize> {
        self.states.iter().position(|s| s == counts)
    }

    pub fn probability(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.len() + to]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let s = self.len();
        &self.transition[i * s..(i + 1) * s]
    }

    pub fn absorbing_indices(&self) -> &[usize] {
        &self.absorbing
    }

    pub fn transient_indices(&self) -> &[usize] {
        &self.transient
    }

    pub fn is_absorbing(&self, i: usize) -> bool {
        self.probability(i, i) == 1.0
    }

    /// State closest to the uniform split; ties go to the lexicographically first.
    pub fn central_state(&self) -> usize {
        let target = self.n as f64 / self.k as f64;
        let dist = |s: &Vec<u32>| s.iter().map(|&c| (c as f64 - target).powi(2)).sum::<f64>();
        let mut best = 0;
        for (i, s) in self.states.iter().enumerate() {
            if dist(s) < dist(&self.states[best]) {
                best = i;
            }
        }
        best
    }

    /// Row sums of the transient block `Q`; each is strictly below one.
    pub fn transient_row_sums(&self) -> Vec<f64> {
        self.transient
            .iter()
            .map(|&i| self.transient.iter().map(|&j| self.probability(i, j)).sum())
            .collect()
    }

    fn step<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let s = self.len();
        let cum = &self.cumulative[from * s..(from + 1) * s];
        let u: f64 = rng.random::<f64>() * cum[s - 1];
        cum.partition_point(|&c| c <= u).min(s - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionReport {
    /// Chain indices of the transient states, in chain order.
    pub transient: Vec<usize>,
    /// Expected refits until an absorbing state, aligned with `transient`.
    pub expected_steps: Vec<f64>,
    /// 1-norm condition number of `I - Q`.
    pub condition: f64,
}

impl AbsorptionReport {
    /// Expected steps from any chain state; zero for absorbing states.
    pub fn steps_from(&self, state: usize) -> f64 {
        self.transient
            .iter()
            .position(|&i| i == state)
            .map_or(0.0, |p| self.expected_steps[p])
    }

    pub fn max_expected_steps(&self) -> f64 {
        self.expected_steps.iter().cloned().fold(0.0, f64::max)
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `(I - Q) t = 1` with a dense LU factorization.
pub fn expected_absorption_steps(chain: &AbsorbingChain) -> Result<AbsorptionReport> {
    let t = chain.transient.len();
    if t == 0 {
        return Ok(AbsorptionReport {
            transient: Vec::new(),
            expected_steps: Vec::new(),
            condition: 1.0,
        });
    }
    let a = DMatrix::from_fn(t, t, |r, c| {
        let q = chain.probability(chain.transient[r], chain.transient[c]);
        if r == c {
            1.0 - q
        } else {
            -q
        }
    });
    let lu = a.clone().lu();
    let inverse = lu
        .try_inverse()
        .ok_or_else(|| Error::Numerical("I - Q is singular".into()))?;
    let condition = one_norm(&a) * one_norm(&inverse);
    if !condition.is_finite() || condition > 1e15 {
        return Err(Error::Numerical(format!(
            "I - Q is numerically singular (condition {condition:e})"
        )));
    }
    let steps = a
        .lu()
        .solve(&nalgebra::DVector::from_element(t, 1.0))
        .ok_or_else(|| Error::Numerical("I - Q is singular".into()))?;
    Ok(AbsorptionReport {
        transient: chain.transient.clone(),
        expected_steps: steps.iter().copied().collect(),
        condition,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Absorption {
    Absorbed { steps: u64 },
    NotAbsorbed,
}

/// Random walk from `start` until an absorbing state or `max_steps` transitions.
pub fn simulate_absorption<R: Rng + ?Sized>(
    chain: &AbsorbingChain,
    start: usize,
    max_steps: u64,
    rng: &mut R,
) -> Result<Absorption> {
    if start >= chain.len() {
        return Err(invalid(format!(
            "start state {start} out of range for {} states",
            chain.len()
        )));
    }
    let mut state = start;
    let mut steps = 0;
    while !chain.is_absorbing(state) {
        if steps == max_steps {
            return Ok(Absorption::NotAbsorbed);
        }
        state = chain.step(state, rng);
        steps += 1;
    }
    Ok(Absorption::Absorbed { steps })
}
