//! Full-sample mode against a textbook AdaBoost loop.

use serde::Serialize;

use crate::engine::{self, EngineConfig, SnapshotMode, Subsample, ACCEPT_TOLERANCE};
use crate::error::Result;
use crate::types::{learning_rate, LabeledSample};
use crate::weak::WeakLearner;

/// Largest per-weight difference allowed between the two sequences.
pub const BASELINE_TOLERANCE: f64 = 1e-12;

/// AdaBoost with fixed rate `α = atanh γ`: each round trains on the whole
/// sample, keeps whichever of `h` and `−h` has the larger advantage if that
/// is at least `γ/2`, and recomputes the distribution from scratch as
/// `D(i) ∝ exp(−y_i Σ_s α_s h_s(x_i))`. Returns `D_1, …, D_{T+1}`.
pub fn adaboost_reference(
    sample: &LabeledSample,
    learner: &dyn WeakLearner,
    rounds: usize,
    gamma: f64,
) -> Result<Vec<Vec<f64>>> {
    let alpha = learning_rate(gamma)?;
    let m = sample.len();
    let y = sample.labels();
    let everyone: Vec<usize> = (0..m).collect();
    let mut f = vec![0.0f64; m];
    let mut out = vec![vec![1.0 / m as f64; m]];
    for _ in 0..rounds {
        let d = out.last().unwrap().clone();
        let h = learner.train(sample, &everyone)?.hypothesis.predictions(sample)?;
        let corr: f64 = (0..m).map(|i| d[i] * f64::from(y[i] * h[i])).sum();
        // advantage of h is corr/2, of −h is −corr/2
        let (sign, adv) = if corr >= -corr { (1.0, corr / 2.0) } else { (-1.0, -corr / 2.0) };
        if adv >= gamma / 2.0 - ACCEPT_TOLERANCE {
            for i in 0..m {
                f[i] += alpha * sign * f64::from(y[i] * h[i]);
            }
        }
        let top = f.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = f.iter().map(|v| (-v - top).exp()).collect();
        let z: f64 = e.iter().sum();
        out.push(e.into_iter().map(|v| v / z).collect());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineReport {
    pub steps: usize,
    pub accepted: usize,
    pub max_abs_diff: f64,
    pub passed: bool,
}

/// Runs the engine with `R = t = 1` on the full sample and compares every
/// distribution with [`adaboost_reference`].
pub fn compare_with_adaboost(
    sample: &LabeledSample,
    learner: &dyn WeakLearner,
    gamma: f64,
    rounds: usize,
    seed: u64,
) -> Result<(BaselineReport, engine::BoostOutcome)> {
    let cfg = EngineConfig::new(gamma, rounds, 1, 1, seed)
        .with_subsample(Subsample::FullSample)
        .with_snapshots(SnapshotMode::EveryStep);
    let outcome = engine::run(&cfg, sample, learner)?;
    let reference = adaboost_reference(sample, learner, rounds, gamma)?;
    let mut max_diff = 0.0f64;
    for (l, want) in reference.iter().enumerate() {
        let got = outcome.trace.distribution(l + 1)?;
        for (a, b) in got.weights().iter().zip(want) {
            max_diff = max_diff.max((a - b).abs());
        }
    }
    let report = BaselineReport {
        steps: outcome.trace.steps.len(),
        accepted: outcome.trace.steps.iter().filter(|s| s.accepted).count(),
        max_abs_diff: max_diff,
        passed: max_diff <= BASELINE_TOLERANCE,
    };
    Ok((report, outcome))
}
