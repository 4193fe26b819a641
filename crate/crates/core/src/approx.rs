//! ε-approximations: checking them over a finite class, sizing bagging
//! subsamples, drawing them, and estimating how often a subsample drawn from
//! one distribution approximates another.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::rng;
use crate::types::{LabeledSample, WeightDistribution};
use crate::weak::FiniteClass;

/// Sizing of bagging subsamples: `n ≥ C_n d / γ²` and the tolerance `ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApproxConfig {
    pub epsilon: f64,
    pub n: usize,
    /// The (unspecified) universal constant; larger only helps.
    pub c_n: f64,
}

impl ApproxConfig {
    pub fn new(epsilon: f64, n: usize, c_n: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(param(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        if n == 0 {
            return Err(param("subsample size must be at least 1"));
        }
        if !(c_n >= 1.0) {
            return Err(param(format!("c_n must be >= 1, got {c_n}")));
        }
        Ok(Self { epsilon, n, c_n })
    }

    /// `ε = γ/2` and `n = ⌈C_n d/γ²⌉`.
    pub fn for_boosting(d: f64, gamma: f64, c_n: f64) -> Result<Self> {
        Self::new(gamma / 2.0, subsample_size(d, gamma, c_n)?, c_n)
    }
}

/// `⌈c_n · d / γ²⌉`.
///
/// Values within a relative `1e-9` of an integer are rounded to it, so
/// `4 / 0.2²` is 100 and not 101 from representation error.
pub fn subsample_size(d: f64, gamma: f64, c_n: f64) -> Result<usize> {
    if !(d >= 1.0) || !d.is_finite() {
        return Err(param(format!("d must be >= 1, got {d}")));
    }
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(param(format!("gamma must lie in (0, 1/2), got {gamma}")));
    }
    if !(c_n >= 1.0) || !c_n.is_finite() {
        return Err(param(format!("c_n must be >= 1, got {c_n}")));
    }
    let x = c_n * d / (gamma * gamma);
    let nearest = x.round();
    let n = if (x - nearest).abs() <= 1e-9 * x {
        nearest
    } else {
        x.ceil()
    };
    if n > usize::MAX as f64 {
        return Err(Error::Resource(format!("subsample size {n} does not fit in memory")));
    }
    Ok(n as usize)
}

/// Precomputed cumulative weights for repeated i.i.d. draws from one
/// distribution. Zero-weight indices are never produced.
#[derive(Clone, Debug)]
pub struct SubsampleDrawer {
    index: WeightedIndex<f64>,
}

impl SubsampleDrawer {
    pub fn new(d: &WeightDistribution) -> Result<Self> {
        let index = WeightedIndex::new(d.weights())
            .map_err(|e| param(format!("cannot sample from distribution: {e}")))?;
        Ok(Self { index })
    }

    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(param("subsample size must be at least 1"));
        }
        Ok((0..n).map(|_| self.index.sample(rng)).collect())
    }
}

/// `n` i.i.d. draws (with replacement) from `d`.
pub fn draw_subsample<R: Rng + ?Sized>(
    d: &WeightDistribution,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    SubsampleDrawer::new(d)?.draw(n, rng)
}

/// `max_h |loss_D(h) − loss_T(h)|`, with multiplicity counted in `T`.
pub fn max_deviation(
    subsample: &[usize],
    d: &WeightDistribution,
    rows: &[Vec<i8>],
    labels: &[i8],
) -> Result<f64> {
    if subsample.is_empty() {
        return Err(param("multiset T is empty"));
    }
    if d.len() != labels.len() {
        return Err(param(format!(
            "distribution over {} indices, sample of {}",
            d.len(),
            labels.len()
        )));
    }
    if let Some(&i) = subsample.iter().find(|&&i| i >= labels.len()) {
        return Err(param(format!("index {i} in T outside sample of {}", labels.len())));
    }
    let n = subsample.len() as f64;
    let mut worst = 0.0f64;
    for row in rows {
        let loss_d: f64 = row
            .iter()
            .zip(labels)
            .zip(d.weights())
            .filter(|((p, y), _)| p != y)
            .map(|(_, w)| w)
            .sum();
        let wrong = subsample.iter().filter(|&&i| row[i] != labels[i]).count();
        worst = worst.max((loss_d - wrong as f64 / n).abs());
    }
    Ok(worst)
}

/// Whether the multiset `t` is an `epsilon`-approximation for `d` over `class`.
pub fn is_eps_approximation(
    t: &[usize],
    d: &WeightDistribution,
    class: &FiniteClass,
    sample: &LabeledSample,
    epsilon: f64,
) -> Result<bool> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(param(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let rows = class.predictions(sample)?;
    Ok(max_deviation(t, d, &rows, sample.labels())? <= epsilon)
}

/// Monte-Carlo success rate with a 95% normal-approximation half-width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateEstimate {
    pub rate: f64,
    pub half_width: f64,
    pub trials: usize,
}

impl RateEstimate {
    pub fn from_counts(successes: usize, trials: usize) -> Self {
        let rate = successes as f64 / trials as f64;
        let half_width = 1.96 * (rate * (1.0 - rate) / trials as f64).sqrt();
        Self {
            rate,
            half_width,
            trials,
        }
    }
}

/// Probability that `T ∼ source^n` is an `epsilon`-approximation for `target`.
///
/// The two distributions must share a support: otherwise the target is not
/// absolutely continuous with respect to the source.
#[allow(clippy::too_many_arguments)]
pub fn empirical_approx_rate(
    target: &WeightDistribution,
    source: &WeightDistribution,
    class: &FiniteClass,
    sample: &LabeledSample,
    n: usize,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<RateEstimate> {
    if trials == 0 {
        return Err(param("need at least one trial"));
    }
    if let Some(i) = target.support_mismatch(source) {
        return Err(Error::Precondition(format!(
            "target and source supports differ at index {i}"
        )));
    }
    let rows = class.predictions(sample)?;
    let drawer = SubsampleDrawer::new(source)?;
    let labels = sample.labels();
    let successes = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<bool> {
            let mut r = rng::stream(seed, &[trial as u64]);
            let t = drawer.draw(n, &mut r)?;
            Ok(max_deviation(&t, target, &rows, labels)? <= epsilon)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&ok| ok)
        .count();
    Ok(RateEstimate::from_counts(successes, trials))
}
