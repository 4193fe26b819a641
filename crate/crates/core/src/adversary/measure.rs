//! Monte-Carlo estimates of expected loss on fresh `(S, c, H)` draws, the
//! analytic floor, and the `(p, R)` grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decoder::{expected_majority_loss, majority_decoder, uniform_loss};
use super::instance::{draw_training_sample, Constants, HardInstance, InstanceParams, DEFAULT_MAX_MATRIX_BYTES};
use super::learners::LearnerKind;
use super::protocol::{run_protocol, OracleMode};
use crate::error::{param, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversaryParams {
    pub m: usize,
    pub d: f64,
    pub p: usize,
    pub r: usize,
    pub t: usize,
    pub gamma: f64,
    pub constants: Constants,
    pub oracle: OracleMode,
    /// Wrap protocol learners in the halting extension.
    pub extension: bool,
    pub max_matrix_bytes: u128,
}

impl AdversaryParams {
    pub fn new(m: usize, d: f64, p: usize, r: usize, t: usize, gamma: f64) -> Self {
        Self {
            m,
            d,
            p,
            r,
            t,
            gamma,
            constants: Constants::default(),
            oracle: OracleMode::Hypotheses,
            extension: true,
            max_matrix_bytes: DEFAULT_MAX_MATRIX_BYTES,
        }
    }

    pub fn instance_params(&self) -> InstanceParams {
        InstanceParams {
            m: self.m,
            d: self.d,
            p: self.p,
            r: self.r,
            gamma: self.gamma,
            constants: self.constants,
            append_concept: self.oracle == OracleMode::WithConcept,
        }
    }

    /// `pR`, the number of biased rows.
    pub fn votes(&self) -> usize {
        self.p * self.r
    }

    /// Expected loss of the majority decoder.
    pub fn exact_majority(&self) -> Result<f64> {
        expected_majority_loss(self.m, self.votes(), self.constants.c_b * self.gamma)
    }

    /// `p t exp(−R d)`.
    pub fn halt_bound(&self) -> f64 {
        self.p as f64 * self.t as f64 * (-(self.r as f64) * self.d).exp()
    }

    /// The analytic floor at `C_l = c_l`.
    pub fn floor(&self, c_l: f64) -> f64 {
        analytic_floor(self.m, self.p, self.r, self.t, self.d, self.gamma, self.constants.c_b, c_l)
    }
}

/// `exp(−C_l C_b² γ² R p)/(4 C_l) · (1 − exp(−m exp(−C_l C_b² γ² R p)/(8 C_l)) − p t exp(−R d))`.
#[allow(clippy::too_many_arguments)]
pub fn analytic_floor(m: usize, p: usize, r: usize, t: usize, d: f64, gamma: f64, c_b: f64, c_l: f64) -> f64 {
    let e = (-c_l * c_b * c_b * gamma * gamma * r as f64 * p as f64).exp();
    let bracket = 1.0 - (-(m as f64) * e / (8.0 * c_l)).exp() - p as f64 * t as f64 * (-(r as f64) * d).exp();
    e / (4.0 * c_l) * bracket
}

/// Smallest `C_l ≥ start` with `analytic_floor ≤ target` at every point,
/// or `None` if no value up to `1e12` works.
pub fn calibrate_c_l(points: &[(AdversaryParams, f64)], start: f64) -> Option<f64> {
    let ok = |c: f64| points.iter().all(|(p, target)| p.floor(c) <= *target);
    let mut lo = start.max(1.0);
    if ok(lo) {
        return Some(lo);
    }
    let mut hi = lo * 2.0;
    while !ok(hi) {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub loss: f64,
    pub halted: bool,
    pub queries: usize,
    pub concept_responses: usize,
}

/// One trial: fresh concept, matrix and sample derived from `(seed, trial)`.
///
/// Every learner sees the same draws for the same `(seed, trial)`, whatever
/// the `(p, R)` point.
pub fn run_trial(kind: LearnerKind, params: &AdversaryParams, seed: u64, trial: u64) -> Result<TrialOutcome> {
    let instance = HardInstance::generate(
        params.instance_params(),
        rng::derive_seed(seed, &[trial, 0]),
        params.max_matrix_bytes,
    )?;
    let sample = draw_training_sample(params.m, &mut rng::stream(seed, &[trial, 1]));
    let labels = instance.labels_of(&sample);
    let (h, halted, queries, concept_responses) = match kind {
        LearnerKind::MajorityDecoder => (majority_decoder(&instance, &sample), false, 0, 0),
        LearnerKind::Concept => (instance.concept().clone(), false, 0, 0),
        _ => {
            let mut learner = kind.build(
                instance.domain(),
                &sample,
                &labels,
                params.gamma,
                params.t,
                rng::stream(seed, &[trial, 2]),
            )?;
            let out = run_protocol(
                learner.as_mut(),
                &instance,
                &sample,
                params.oracle,
                params.extension,
                params.p,
                params.t,
            )?;
            (out.hypothesis, out.halted, out.queries, out.concept_responses)
        }
    };
    Ok(TrialOutcome {
        loss: uniform_loss(&h, instance.concept()),
        halted,
        queries,
        concept_responses,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossEstimate {
    pub learner: LearnerKind,
    pub trials: usize,
    pub mean: f64,
    pub std_dev: f64,
    /// 95% normal half-width of the mean.
    pub half_width: f64,
    pub halts: usize,
    pub halt_rate: f64,
    pub halt_half_width: f64,
    pub concept_responses: usize,
    pub exact_majority: f64,
    /// Floor at the configured `C_l`.
    pub analytic_floor: f64,
    pub halt_bound: f64,
}

impl LossEstimate {
    pub fn lower(&self, widths: f64) -> f64 {
        self.mean - widths * self.half_width
    }
}

/// Mean loss of `kind` over `trials` independent draws, in parallel.
pub fn measure_expected_loss(kind: LearnerKind, params: &AdversaryParams, trials: usize, seed: u64) -> Result<LossEstimate> {
    if trials == 0 {
        return Err(param("trials must be at least 1"));
    }
    params.instance_params().validate()?;
    if params.t == 0 {
        return Err(param("t must be at least 1"));
    }
    let outcomes = (0..trials as u64)
        .into_par_iter()
        .map(|i| run_trial(kind, params, seed, i))
        .collect::<Result<Vec<_>>>()?;
    let n = trials as f64;
    let mean = outcomes.iter().map(|o| o.loss).sum::<f64>() / n;
    let var = if trials > 1 {
        outcomes.iter().map(|o| (o.loss - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let halts = outcomes.iter().filter(|o| o.halted).count();
    let rate = halts as f64 / n;
    Ok(LossEstimate {
        learner: kind,
        trials,
        mean,
        std_dev: var.sqrt(),
        half_width: 1.96 * (var / n).sqrt(),
        halts,
        halt_rate: rate,
        halt_half_width: 1.96 * (rate * (1.0 - rate) / n).sqrt(),
        concept_responses: outcomes.iter().map(|o| o.concept_responses).sum(),
        exact_majority: params.exact_majority()?,
        analytic_floor: params.floor(params.constants.c_l),
        halt_bound: params.halt_bound(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub base: AdversaryParams,
    pub rs: Vec<usize>,
    pub ps: Vec<usize>,
    pub learners: Vec<LearnerKind>,
    pub trials: usize,
    pub seed: u64,
    /// Slack, in 95% half-widths, allowed below the majority decoder.
    pub ml_widths: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub p: usize,
    pub r: usize,
    pub votes: usize,
    pub exact_majority: f64,
    pub floor_calibrated: f64,
    pub estimates: Vec<LossEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridReport {
    pub points: Vec<GridPoint>,
    /// Smallest `C_l` whose floor stays under the exact majority loss.
    pub calibrated_c_l: Option<f64>,
    /// Learners beating the majority decoder by more than the slack.
    pub ml_violations: Vec<String>,
    /// Increases in loss with `pR` beyond the summed half-widths.
    pub monotone_violations: Vec<String>,
    /// Points where a fair learner sits below the calibrated floor.
    pub floor_violations: Vec<String>,
    /// Early-halt rates above `p t e^{−Rd}` plus the slack.
    pub halt_violations: Vec<String>,
}

impl GridReport {
    /// The maximum-likelihood floor, monotonicity and calibrated floor all hold.
    pub fn passed(&self) -> bool {
        self.ml_violations.is_empty() && self.monotone_violations.is_empty() && self.floor_violations.is_empty()
    }
}

pub fn adversary_grid(spec: &GridSpec) -> Result<GridReport> {
    if spec.rs.is_empty() || spec.ps.is_empty() || spec.learners.is_empty() {
        return Err(param("grid needs at least one R, one p and one learner"));
    }
    let mut points = Vec::new();
    for &r in &spec.rs {
        for &p in &spec.ps {
            let params = AdversaryParams { p, r, ..spec.base };
            let estimates = spec
                .learners
                .iter()
                .map(|&k| measure_expected_loss(k, &params, spec.trials, spec.seed))
                .collect::<Result<Vec<_>>>()?;
            points.push((params, estimates));
        }
    }
    let targets: Vec<(AdversaryParams, f64)> = points
        .iter()
        .map(|(p, _)| Ok((*p, p.exact_majority()?)))
        .collect::<Result<_>>()?;
    let calibrated = calibrate_c_l(&targets, spec.base.constants.c_l);

    let w = spec.ml_widths;
    let mut report = GridReport {
        points: Vec::new(),
        calibrated_c_l: calibrated,
        ml_violations: Vec::new(),
        monotone_violations: Vec::new(),
        floor_violations: Vec::new(),
        halt_violations: Vec::new(),
    };
    for (params, estimates) in points {
        let exact = params.exact_majority()?;
        let floor = calibrated.map_or(f64::NAN, |c| params.floor(c));
        for e in estimates.iter().filter(|e| e.learner.is_fair()) {
            let tag = format!("{} at p={}, R={}", e.learner, params.p, params.r);
            if e.mean < exact - w * e.half_width {
                report
                    .ml_violations
                    .push(format!("{tag}: loss {:.5} ± {:.5} below exact {exact:.5}", e.mean, e.half_width));
            }
            if e.mean < floor - w * e.half_width {
                report
                    .floor_violations
                    .push(format!("{tag}: loss {:.5} below calibrated floor {floor:.5}", e.mean));
            }
            if e.learner.uses_protocol()
                && params.extension
                && e.halt_rate > params.halt_bound() + w * e.halt_half_width
            {
                report.halt_violations.push(format!(
                    "{tag}: early-halt rate {:.4} above p·t·e^(−Rd) = {:.4}",
                    e.halt_rate,
                    params.halt_bound()
                ));
            }
        }
        report.points.push(GridPoint {
            p: params.p,
            r: params.r,
            votes: params.votes(),
            exact_majority: exact,
            floor_calibrated: floor,
            estimates,
        });
    }
    let mut order: Vec<usize> = (0..report.points.len()).collect();
    order.sort_by_key(|&i| (report.points[i].votes, report.points[i].p));
    for (li, kind) in spec.learners.iter().enumerate() {
        for pair in order.windows(2) {
            let (a, b) = (&report.points[pair[0]], &report.points[pair[1]]);
            let (ea, eb) = (&a.estimates[li], &b.estimates[li]);
            if eb.mean > ea.mean + ea.half_width + eb.half_width {
                report.monotone_violations.push(format!(
                    "{kind}: loss rises from {:.5} (pR={}) to {:.5} (pR={})",
                    ea.mean, a.votes, eb.mean, b.votes
                ));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_formula() {
        // e^{-0.01}/4 · (1 − e^{−200 e^{−0.01}/8} − 4 e^{−2})
        let f = analytic_floor(200, 1, 1, 4, 2.0, 0.1, 1.0, 1.0);
        let e = (-0.01f64).exp();
        let want = e / 4.0 * (1.0 - (-200.0 * e / 8.0).exp() - 4.0 * (-2.0f64).exp());
        assert!((f - want).abs() < 1e-15);
    }

    #[test]
    fn calibration_is_minimal() {
        let pts: Vec<(AdversaryParams, f64)> = [(1, 4), (8, 4), (2, 1)]
            .iter()
            .map(|&(p, r)| {
                let a = AdversaryParams::new(200, 2.0, p, r, 4, 0.1);
                (a, a.exact_majority().unwrap())
            })
            .collect();
        let c = calibrate_c_l(&pts, 1.0).unwrap();
        assert!(pts.iter().all(|(p, t)| p.floor(c) <= *t));
        assert!(c == 1.0 || pts.iter().any(|(p, t)| p.floor(c * (1.0 - 1e-6)) > *t));
    }

    #[test]
    fn concept_learner_has_zero_loss() {
        let a = AdversaryParams::new(50, 1.0, 2, 2, 2, 0.1);
        let e = measure_expected_loss(LearnerKind::Concept, &a, 20, 1).unwrap();
        assert_eq!(e.mean, 0.0);
    }

    #[test]
    fn all_ones_is_half() {
        let a = AdversaryParams::new(100, 1.0, 1, 1, 1, 0.1);
        let e = measure_expected_loss(LearnerKind::AllOnes, &a, 2000, 3).unwrap();
        assert!((e.mean - 0.5).abs() <= 3.0 * e.half_width);
        assert_eq!(e.halts, 0);
    }

    #[test]
    fn majority_matches_exact() {
        let a = AdversaryParams::new(100, 1.0, 3, 1, 1, 0.1);
        let e = measure_expected_loss(LearnerKind::MajorityDecoder, &a, 4000, 7).unwrap();
        assert!((e.mean - e.exact_majority).abs() <= 3.0 * e.half_width, "{e:?}");
    }

    #[test]
    fn deterministic() {
        let a = AdversaryParams::new(60, 1.0, 2, 2, 3, 0.1);
        let x = measure_expected_loss(LearnerKind::NaiveBoosting, &a, 50, 9).unwrap();
        let y = measure_expected_loss(LearnerKind::NaiveBoosting, &a, 50, 9).unwrap();
        assert_eq!(x, y);
    }
}
