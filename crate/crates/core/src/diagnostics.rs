//! Divergences between weight distributions and the per-round analysis of
//! a [`BoostTrace`]: telescoping decomposition of `KL(D_{kR+R'} ‖ D_{kR+1})`
//! and the three-way case split on each distribution.
//!
//! All logarithms are natural. `0·ln(0/q) = 0`; mass of `P` where `Q` has
//! none is an error, never an infinity.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{neumaier_sum, BoostTrace};
use crate::error::{param, Error, Result};
use crate::types::WeightDistribution;

/// Relative tolerance for the telescoping identity.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Lower bound on duality slack before it counts as a violation.
pub const DUALITY_TOLERANCE: f64 = 1e-10;

fn check_lengths(p: &WeightDistribution, q: &WeightDistribution) -> Result<()> {
    if p.len() != q.len() {
        return Err(param(format!(
            "distributions over {} and {} points",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// `KL(P ‖ Q) = Σ_x P(x) ln(P(x)/Q(x))`.
pub fn kl_divergence(p: &WeightDistribution, q: &WeightDistribution) -> Result<f64> {
    check_lengths(p, q)?;
    let mut terms = Vec::with_capacity(p.len());
    for (i, (&a, &b)) in p.weights().iter().zip(q.weights()).enumerate() {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(Error::AbsoluteContinuity { index: i });
        }
        terms.push(a * (a / b).ln());
    }
    // rounding can leave a tiny negative sum when P ≈ Q
    Ok(neumaier_sum(terms).max(0.0))
}

/// `ln max_x P(x)/Q(x)` over the common support.
pub fn max_divergence(p: &WeightDistribution, q: &WeightDistribution) -> Result<f64> {
    check_lengths(p, q)?;
    if let Some(index) = p.support_mismatch(q) {
        return Err(Error::AbsoluteContinuity { index });
    }
    Ok(p.weights()
        .iter()
        .zip(q.weights())
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| (a / b).ln())
        .fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DualityCertificate {
    /// `ln E_P[e^X]`.
    pub lhs: f64,
    /// `E_Q[X] − KL(Q ‖ P)`.
    pub rhs: f64,
    pub slack: f64,
}

/// Evaluates both sides of `ln E_P[e^X] ≥ E_Q[X] − KL(Q ‖ P)`.
///
/// `x` is indexed like the distributions; entries off the support are
/// ignored. A slack below `−DUALITY_TOLERANCE` is an invariant violation.
pub fn duality_certificate(p: &WeightDistribution, q: &WeightDistribution, x: &[f64]) -> Result<DualityCertificate> {
    check_lengths(p, q)?;
    if x.len() != p.len() {
        return Err(param("random variable and distributions differ in length"));
    }
    if let Some(index) = p.support_mismatch(q) {
        return Err(Error::AbsoluteContinuity { index });
    }
    let support: Vec<usize> = p.support();
    if let Some(&i) = support.iter().find(|&&i| !x[i].is_finite()) {
        return Err(param(format!("X({i}) is not finite")));
    }
    let max = support.iter().map(|&i| x[i]).fold(f64::NEG_INFINITY, f64::max);
    let lhs = max + neumaier_sum(support.iter().map(|&i| p.get(i) * (x[i] - max).exp())).ln();
    let rhs = neumaier_sum(support.iter().map(|&i| q.get(i) * x[i])) - kl_divergence(q, p)?;
    let slack = lhs - rhs;
    if slack < -DUALITY_TOLERANCE {
        return Err(Error::Invariant(format!(
            "duality inequality violated: lhs {lhs} < rhs {rhs}"
        )));
    }
    Ok(DualityCertificate { lhs, rhs, slack })
}

/// The branch of the per-round case split that a distribution falls into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Trichotomy {
    /// `KL(D_{kR+R'} ‖ D_{kR+1}) ≤ 4γ²R`.
    LowKl,
    /// `−ln Π_{r<R'} Z_r > 2γ²R`.
    Progress,
    /// Some already-used `−h_r` has advantage above `γ/2`.
    NegationAdvantage,
}

impl Trichotomy {
    pub fn as_str(self) -> &'static str {
        match self {
            Trichotomy::LowKl => "LOW_KL",
            Trichotomy::Progress => "PROGRESS",
            Trichotomy::NegationAdvantage => "NEGATION_ADVANTAGE",
        }
    }
}

impl fmt::Display for Trichotomy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything computed at one `(k, R')`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitPoint {
    pub round: usize,
    /// 1-based offset `R'` within the round: the distribution is `D_{kR+R'}`.
    pub offset: usize,
    pub kl: f64,
    /// `−ln Π_{r<R'} Z_{kR+r}`.
    pub neg_log_z: f64,
    /// `Σ_{r<R'} α_r E_{D_{kR+R'}}[c h_r]`.
    pub weighted_correlation: f64,
    pub residual: f64,
    pub label: Trichotomy,
    /// For `NegationAdvantage`: the global step `ℓ` whose negation is
    /// advantaged, and that advantage.
    pub witness: Option<(usize, f64)>,
}

fn check_round(trace: &BoostTrace, k: usize, offset: usize) -> Result<()> {
    let r = trace.params.steps_per_round;
    if k >= trace.num_rounds() {
        return Err(param(format!("round {k} not in trace with {} rounds", trace.num_rounds())));
    }
    let available = trace.round_steps(k).len();
    if offset == 0 || offset > available + 1 || offset > r + 1 {
        return Err(param(format!("offset {offset} outside 1..={}", available.min(r) + 1)));
    }
    Ok(())
}

/// Evaluates the decomposition and the case split at `D_{kR+R'}`.
pub fn analyze_split(trace: &BoostTrace, k: usize, offset: usize) -> Result<SplitPoint> {
    check_round(trace, k, offset)?;
    let big_r = trace.params.steps_per_round;
    let gamma = trace.params.gamma;
    let first = k * big_r + 1;
    let start = trace.distribution(first)?;
    let current = trace.distribution(first + offset - 1)?;
    let kl = kl_divergence(&current, &start)?;
    let steps = &trace.steps[first - 1..first - 1 + offset - 1];
    let neg_log_z = -neumaier_sum(steps.iter().map(|s| s.z.ln()));

    let mut correlations = Vec::with_capacity(steps.len());
    for s in steps {
        let corr = neumaier_sum(
            trace
                .step_agreements(s.step)
                .iter()
                .zip(current.weights())
                .map(|(a, w)| a * w),
        );
        correlations.push((s.step, s.alpha, corr));
    }
    let weighted = neumaier_sum(correlations.iter().map(|(_, a, c)| a * c));
    let residual = kl - (neg_log_z - weighted);

    let low = 4.0 * gamma * gamma * big_r as f64;
    let (label, witness) = if kl <= low {
        (Trichotomy::LowKl, None)
    } else if neg_log_z > low / 2.0 {
        (Trichotomy::Progress, None)
    } else {
        // advantage of −h_r under D is −½ E_D[c h_r]
        let best = correlations
            .iter()
            .filter(|(_, a, _)| *a != 0.0)
            .map(|&(step, _, c)| (step, -0.5 * c))
            .fold(None, |acc: Option<(usize, f64)>, x| match acc {
                Some(b) if b.1 >= x.1 => Some(b),
                _ => Some(x),
            });
        match best {
            Some((step, adv)) if adv > gamma / 2.0 => (Trichotomy::NegationAdvantage, Some((step, adv))),
            _ => {
                return Err(Error::Invariant(format!(
                    "round {k}, offset {offset}: KL {kl} > {low} and −ln ΠZ {neg_log_z} ≤ {} \
                     but no negated hypothesis has advantage above γ/2 (best {:?})",
                    low / 2.0,
                    best
                )))
            }
        }
    };
    Ok(SplitPoint {
        round: k,
        offset,
        kl,
        neg_log_z,
        weighted_correlation: weighted,
        residual,
        label,
        witness,
    })
}

/// `KL − (−ln Π Z − Σ α E[c h])` at `D_{kR+R'}`; zero up to rounding.
pub fn telescoping_residual(trace: &BoostTrace, k: usize, offset: usize) -> Result<f64> {
    Ok(analyze_split(trace, k, offset)?.residual)
}

/// The branch `D_{kR+R'}` falls into. Fails with [`Error::Invariant`] if
/// the third branch cannot exhibit an advantaged negation.
pub fn classify_trichotomy(trace: &BoostTrace, k: usize, offset: usize) -> Result<Trichotomy> {
    Ok(analyze_split(trace, k, offset)?.label)
}

/// Whether a residual passes at the configured relative tolerance.
pub fn residual_ok(residual: f64, kl: f64) -> bool {
    residual.abs() <= RESIDUAL_TOLERANCE * kl.abs().max(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundDiagnostics {
    pub round: usize,
    /// Offsets `R' = 1 …`; entry `r` describes the distribution after step `r`.
    pub splits: Vec<SplitPoint>,
    /// `D_∞(D_{kR+R'} ‖ D_{kR+1})` per offset.
    pub max_div_forward: Vec<f64>,
    /// `D_∞(D_{kR+1} ‖ D_{kR+R'})` per offset.
    pub max_div_backward: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KlReport {
    pub rounds: Vec<RoundDiagnostics>,
    pub max_abs_residual: f64,
    pub residuals_ok: bool,
    pub low_kl: usize,
    pub progress: usize,
    pub negation_advantage: usize,
}

impl KlReport {
    /// The split point describing the distribution after global step `ℓ`.
    pub fn after_step(&self, step: usize, steps_per_round: usize) -> Option<&SplitPoint> {
        let k = (step - 1) / steps_per_round;
        let r = (step - 1) % steps_per_round + 1;
        self.rounds.get(k)?.splits.get(r)
    }
}

fn round_diagnostics(trace: &BoostTrace, k: usize) -> Result<RoundDiagnostics> {
    let steps = trace.round_steps(k).len();
    let first = k * trace.params.steps_per_round + 1;
    let start = trace.distribution(first)?;
    let mut splits = Vec::with_capacity(steps + 1);
    let mut fwd = Vec::with_capacity(steps + 1);
    let mut bwd = Vec::with_capacity(steps + 1);
    for offset in 1..=steps + 1 {
        splits.push(analyze_split(trace, k, offset)?);
        let d = trace.distribution(first + offset - 1)?;
        fwd.push(max_divergence(&d, &start)?);
        bwd.push(max_divergence(&start, &d)?);
    }
    Ok(RoundDiagnostics {
        round: k,
        splits,
        max_div_forward: fwd,
        max_div_backward: bwd,
    })
}

/// Full per-round analysis of a trace, parallel across rounds.
pub fn kl_report(trace: &BoostTrace) -> Result<KlReport> {
    let rounds = (0..trace.num_rounds())
        .into_par_iter()
        .map(|k| round_diagnostics(trace, k))
        .collect::<Result<Vec<_>>>()?;
    let mut report = KlReport {
        rounds,
        max_abs_residual: 0.0,
        residuals_ok: true,
        low_kl: 0,
        progress: 0,
        negation_advantage: 0,
    };
    for sp in report.rounds.iter().flat_map(|r| &r.splits) {
        report.max_abs_residual = report.max_abs_residual.max(sp.residual.abs());
        report.residuals_ok &= residual_ok(sp.residual, sp.kl);
        match sp.label {
            Trichotomy::LowKl => report.low_kl += 1,
            Trichotomy::Progress => report.progress += 1,
            Trichotomy::NegationAdvantage => report.negation_advantage += 1,
        }
    }
    Ok(report)
}
