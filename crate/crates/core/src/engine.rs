//! The parallel boosting engine.
//!
//! Each of the `p` rounds has two phases:
//!
//! 1. **Bagging** (parallel). Freeze the round-start distribution `D_{kR+1}`.
//!    For every sub-round `r ∈ 1..=R` and every `j ∈ 1..=t/R`, draw
//!    `T ∼ D_{kR+1}^n` and train the weak learner on `Uniform(T)`. Sub-round
//!    `r` gets the pool `{h_{r,j}} ∪ {−h_{r,j}}`.
//! 2. **Boosting** (sequential). For `r = 1..=R`, pick a pool member with
//!    loss `≤ ½ − γ/2` under the *current* distribution and take an
//!    AdaBoost step with the fixed rate `α(γ)`; if no member qualifies the
//!    step is skipped (`α = 0`, `Z = 1`).
//!
//! The output is `g = Σ α_ℓ h_ℓ / Σ α_ℓ` together with a [`BoostTrace`]
//! recording every `α_ℓ`, `Z_ℓ` and distribution.

use std::borrow::Cow;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::approx::{subsample_size, SubsampleDrawer};
use crate::error::{param, Error, Result};
use crate::rng;
use crate::types::{learning_rate, Hypothesis, LabeledSample, LinearClassifier, WeightDistribution};
use crate::weak::{WeakLearner, WeakLearnerSpec};

/// Slack on the inclusive acceptance boundary `loss ≤ ½ − γ/2`, absorbing
/// summation rounding in the weighted loss.
pub const ACCEPT_TOLERANCE: f64 = 1e-12;

/// Default cap on `p·t`, the total number of weak-learner calls.
pub const DEFAULT_MAX_WEAK_CALLS: u128 = 200_000_000;

/// Default cap on stored distribution snapshots, in bytes.
pub const DEFAULT_MAX_SNAPSHOT_BYTES: u128 = 2 << 30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Subsample {
    /// Fixed `n`.
    Fixed(usize),
    /// `n = ⌈c_n d / γ²⌉` with `d` reported by the weak learner.
    FromCapacity { c_n: f64 },
    /// Debug mode: every call sees the whole training set verbatim.
    FullSample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionRule {
    /// The member with the largest advantage (ties: provenance order).
    MaxAdvantage,
    /// The first qualifying member in provenance order.
    FirstFound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotMode {
    /// Store `D_1 … D_{pR+1}` explicitly.
    EveryStep,
    /// Store round-start distributions only; intermediate ones are replayed.
    RoundStarts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub gamma: f64,
    /// `p`, the number of parallel rounds.
    pub rounds: usize,
    /// `R`, boosting steps per round.
    pub steps_per_round: usize,
    /// `t`, weak-learner calls per round.
    pub pool_size: usize,
    pub subsample: Subsample,
    pub seed: u64,
    pub parallelism: usize,
    pub selection: SelectionRule,
    pub snapshots: SnapshotMode,
    pub max_weak_calls: u128,
    pub max_snapshot_bytes: u128,
}

impl EngineConfig {
    pub fn new(gamma: f64, rounds: usize, steps_per_round: usize, pool_size: usize, seed: u64) -> Self {
        Self {
            gamma,
            rounds,
            steps_per_round,
            pool_size,
            subsample: Subsample::FromCapacity { c_n: 1.0 },
            seed,
            parallelism: 1,
            selection: SelectionRule::MaxAdvantage,
            snapshots: SnapshotMode::EveryStep,
            max_weak_calls: DEFAULT_MAX_WEAK_CALLS,
            max_snapshot_bytes: DEFAULT_MAX_SNAPSHOT_BYTES,
        }
    }

    pub fn with_subsample(mut self, subsample: Subsample) -> Self {
        self.subsample = subsample;
        self
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn with_selection(mut self, selection: SelectionRule) -> Self {
        self.selection = selection;
        self
    }

    pub fn with_snapshots(mut self, snapshots: SnapshotMode) -> Self {
        self.snapshots = snapshots;
        self
    }

    /// `t/R`, the number of trained hypotheses per sub-round.
    pub fn calls_per_sub_round(&self) -> usize {
        self.pool_size / self.steps_per_round.max(1)
    }

    pub fn total_steps(&self) -> usize {
        self.rounds * self.steps_per_round
    }

    /// Checks structural constraints and resource budgets for a sample of
    /// `m` points.
    pub fn validate(&self, m: usize) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return Err(param(format!("gamma must lie in (0, 1/2), got {}", self.gamma)));
        }
        if self.rounds == 0 || self.steps_per_round == 0 {
            return Err(param("rounds and steps_per_round must be at least 1"));
        }
        if self.pool_size < self.steps_per_round {
            return Err(param(format!(
                "pool size t={} is smaller than R={}",
                self.pool_size, self.steps_per_round
            )));
        }
        if !self.pool_size.is_multiple_of(self.steps_per_round) {
            return Err(param(format!(
                "R={} must divide t={}",
                self.steps_per_round, self.pool_size
            )));
        }
        if self.parallelism == 0 {
            return Err(param("parallelism must be at least 1"));
        }
        match self.subsample {
            Subsample::Fixed(0) => return Err(param("subsample size must be at least 1")),
            Subsample::FromCapacity { c_n } if !(c_n >= 1.0) => {
                return Err(param(format!("c_n must be >= 1, got {c_n}")))
            }
            _ => {}
        }
        let calls = self.rounds as u128 * self.pool_size as u128;
        if calls > self.max_weak_calls {
            return Err(Error::Resource(format!(
                "p·t = {calls} weak-learner calls exceeds the budget of {}",
                self.max_weak_calls
            )));
        }
        if self.snapshots == SnapshotMode::EveryStep {
            let bytes = (self.total_steps() as u128 + 1) * m as u128 * 8;
            if bytes > self.max_snapshot_bytes {
                return Err(Error::Resource(format!(
                    "storing every distribution needs {bytes} bytes (budget {}); \
                     use round-start snapshots",
                    self.max_snapshot_bytes
                )));
            }
        }
        Ok(())
    }
}

/// Where a pool member came from: `h_{kR+r, j}` or its negation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub round: usize,
    /// 1-based sub-round `r`.
    pub sub_round: usize,
    /// 0-based call index `j` within the sub-round.
    pub call: usize,
    pub negated: bool,
}

/// One trained hypothesis with its cached predictions on the sample.
#[derive(Clone, Debug)]
pub struct PoolEntry {
    pub hypothesis: Hypothesis,
    pub predictions: Arc<[i8]>,
    /// Advantage on the subsample it was trained on.
    pub trained_advantage: f64,
    pub provenance: Provenance,
}

/// The pool `H_{kR+r}`: trained hypotheses followed by their negations.
#[derive(Clone, Debug)]
pub struct RoundPool {
    pub round: usize,
    pub sub_round: usize,
    trained: Vec<PoolEntry>,
}

impl RoundPool {
    pub fn new(round: usize, sub_round: usize, trained: Vec<PoolEntry>) -> Result<Self> {
        if trained.is_empty() {
            return Err(param("a pool needs at least one trained hypothesis"));
        }
        Ok(Self {
            round,
            sub_round,
            trained,
        })
    }

    /// Builds a pool directly from hypotheses, evaluating them on `sample`.
    pub fn from_hypotheses(sample: &LabeledSample, hypotheses: &[Hypothesis]) -> Result<Self> {
        let trained = hypotheses
            .iter()
            .enumerate()
            .map(|(call, h)| {
                Ok(PoolEntry {
                    hypothesis: h.clone(),
                    predictions: h.predictions(sample)?.into(),
                    trained_advantage: f64::NAN,
                    provenance: Provenance {
                        round: 0,
                        sub_round: 1,
                        call,
                        negated: false,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(0, 1, trained)
    }

    /// `2·(t/R)`.
    pub fn len(&self) -> usize {
        2 * self.trained.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trained.is_empty()
    }

    pub fn trained(&self) -> &[PoolEntry] {
        &self.trained
    }

    /// Member `idx` in provenance order: `h_1 … h_{t/R}, −h_1 … −h_{t/R}`.
    pub fn member(&self, idx: usize) -> PoolMember<'_> {
        let half = self.trained.len();
        let negated = idx >= half;
        let entry = &self.trained[idx % half];
        PoolMember {
            entry,
            negated,
            index: idx,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PoolMember<'a> {
    pub entry: &'a PoolEntry,
    pub negated: bool,
    pub index: usize,
}

impl PoolMember<'_> {
    pub fn hypothesis(&self) -> Hypothesis {
        if self.negated {
            self.entry.hypothesis.negate()
        } else {
            self.entry.hypothesis.clone()
        }
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            negated: self.negated,
            ..self.entry.provenance
        }
    }
}

/// Outcome of scanning one pool under one distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoolScan {
    /// Chosen member and its advantage, when some member clears `γ/2`.
    pub selected: Option<(usize, f64)>,
    /// Largest advantage in the pool, accepted or not.
    pub best_advantage: f64,
}

/// Advantage `½ − loss_D` of every pool member, in provenance order.
pub fn pool_advantages(pool: &RoundPool, d: &WeightDistribution, labels: &[i8]) -> Vec<f64> {
    let half = pool.trained.len();
    let mut adv = vec![0.0; 2 * half];
    for (j, entry) in pool.trained.iter().enumerate() {
        let (mut wrong, mut right) = (0.0, 0.0);
        for ((p, y), w) in entry.predictions.iter().zip(labels).zip(d.weights()) {
            if p == y {
                right += w;
            } else {
                wrong += w;
            }
        }
        adv[j] = 0.5 - wrong;
        adv[half + j] = 0.5 - right;
    }
    adv
}

/// Scans a pool for a member with loss `≤ ½ − γ/2` (inclusive).
pub fn scan_pool(
    pool: &RoundPool,
    d: &WeightDistribution,
    labels: &[i8],
    gamma: f64,
    rule: SelectionRule,
) -> PoolScan {
    let adv = pool_advantages(pool, d, labels);
    let qualifies = |a: f64| 0.5 - a <= 0.5 - gamma / 2.0 + ACCEPT_TOLERANCE;
    let mut best_idx = 0;
    for (i, &a) in adv.iter().enumerate() {
        if a > adv[best_idx] {
            best_idx = i;
        }
    }
    let best_advantage = adv[best_idx];
    let selected = match rule {
        SelectionRule::MaxAdvantage => qualifies(best_advantage).then_some((best_idx, best_advantage)),
        SelectionRule::FirstFound => adv.iter().position(|&a| qualifies(a)).map(|i| (i, adv[i])),
    };
    PoolScan {
        selected,
        best_advantage,
    }
}

/// Returns the maximal-advantage member if its loss under `d` is at most
/// `½ − γ/2`.
pub fn select_advantaged(
    pool: &RoundPool,
    d: &WeightDistribution,
    sample: &LabeledSample,
    gamma: f64,
) -> Result<Option<(Hypothesis, f64)>> {
    if d.len() != sample.len() {
        return Err(param("distribution and sample lengths differ"));
    }
    let scan = scan_pool(pool, d, sample.labels(), gamma, SelectionRule::MaxAdvantage);
    Ok(scan
        .selected
        .map(|(idx, a)| (pool.member(idx).hypothesis(), a)))
}

/// One reweighting step on precomputed predictions.
///
/// Returns the normalized `D'(i) ∝ D(i)·exp(−α c(x_i) h(x_i))` and
/// `Z = Σ_i D(i)·exp(−α c(x_i) h(x_i))`. With `α = 0` the input is returned
/// unchanged with `Z = 1` exactly.
pub fn boost_step_predictions(
    d: &WeightDistribution,
    predictions: &[i8],
    labels: &[i8],
    alpha: f64,
) -> Result<(WeightDistribution, f64)> {
    if predictions.len() != d.len() || labels.len() != d.len() {
        return Err(param("distribution, predictions and labels must have equal length"));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(param(format!("alpha must be finite and non-negative, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok((d.clone(), 1.0));
    }
    let down = (-alpha).exp();
    let up = alpha.exp();
    let mut masses: Vec<f64> = d
        .weights()
        .iter()
        .zip(predictions.iter().zip(labels))
        .map(|(w, (p, y))| if p == y { w * down } else { w * up })
        .collect();
    let z: f64 = masses.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Internal(format!("normalization factor Z = {z}")));
    }
    for w in &mut masses {
        *w /= z;
    }
    if let Some(i) = masses
        .iter()
        .zip(d.weights())
        .position(|(a, b)| (*a > 0.0) != (*b > 0.0))
    {
        return Err(Error::Internal(format!(
            "weight {i} underflowed; the support must be preserved"
        )));
    }
    Ok((WeightDistribution::from_raw(masses), z))
}

/// [`boost_step_predictions`] for a hypothesis evaluated on `sample`.
pub fn boost_step(
    d: &WeightDistribution,
    h: &Hypothesis,
    alpha: f64,
    sample: &LabeledSample,
) -> Result<(WeightDistribution, f64)> {
    let preds = h.predictions(sample)?;
    boost_step_predictions(d, &preds, sample.labels(), alpha)
}

/// Run parameters echoed into the trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceParams {
    pub gamma: f64,
    pub alpha: f64,
    pub rounds: usize,
    pub steps_per_round: usize,
    pub pool_size: usize,
    pub subsample_size: Option<usize>,
    pub seed: u64,
}

impl TraceParams {
    /// Parameters for a hand-built trace.
    pub fn manual(gamma: f64, rounds: usize, steps_per_round: usize) -> Result<Self> {
        Ok(Self {
            gamma,
            alpha: learning_rate(gamma)?,
            rounds,
            steps_per_round,
            pool_size: 0,
            subsample_size: None,
            seed: 0,
        })
    }
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    /// 1-based global step `ℓ`.
    pub step: usize,
    /// 0-based round `k`.
    pub round: usize,
    /// 1-based sub-round `r`.
    pub sub_round: usize,
    pub alpha: f64,
    pub z: f64,
    pub accepted: bool,
    pub hypothesis: Hypothesis,
    /// Trace-level id of the un-negated body; see [`BoostTrace::body_predictions`].
    pub hypothesis_id: usize,
    pub provenance: Option<Provenance>,
    /// Advantage of the recorded hypothesis under `D_ℓ`.
    pub advantage: f64,
    /// Best advantage available in the pool under `D_ℓ`.
    pub pool_best_advantage: f64,
}

/// Complete record of a run: steps, distributions and call accounting.
#[derive(Clone, Debug)]
pub struct BoostTrace {
    pub params: TraceParams,
    pub steps: Vec<StepRecord>,
    /// Weak-learner invocations performed.
    pub weak_calls: u64,
    /// Calls whose empirical advantage fell below `γ`.
    pub advantage_shortfalls: u64,
    /// Smallest empirical advantage returned by any call.
    pub min_trained_advantage: f64,
    labels: Vec<i8>,
    bodies: Vec<Arc<[i8]>>,
    snapshots: SnapshotMode,
    /// `EveryStep`: `D_1 … D_{pR+1}`. `RoundStarts`: `D_{kR+1}` per round
    /// plus the final distribution.
    distributions: Vec<WeightDistribution>,
}

impl BoostTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn num_rounds(&self) -> usize {
        self.steps.len().div_ceil(self.params.steps_per_round)
    }

    /// Steps of round `k`.
    pub fn round_steps(&self, k: usize) -> &[StepRecord] {
        let r = self.params.steps_per_round;
        let lo = (k * r).min(self.steps.len());
        let hi = ((k + 1) * r).min(self.steps.len());
        &self.steps[lo..hi]
    }

    /// Predictions of the un-negated body `id` on the sample.
    pub fn body_predictions(&self, id: usize) -> &[i8] {
        &self.bodies[id]
    }

    /// `h_ℓ(x_i)` for the 1-based step `ℓ`.
    pub fn step_prediction(&self, step: usize, i: usize) -> i8 {
        let rec = &self.steps[step - 1];
        let p = self.bodies[rec.hypothesis_id][i];
        if rec.hypothesis.is_negated() {
            -p
        } else {
            p
        }
    }

    /// `c(x_i) h_ℓ(x_i)` for every `i`.
    pub fn step_agreements(&self, step: usize) -> Vec<f64> {
        let rec = &self.steps[step - 1];
        let sign = if rec.hypothesis.is_negated() { -1.0 } else { 1.0 };
        self.bodies[rec.hypothesis_id]
            .iter()
            .zip(&self.labels)
            .map(|(p, y)| sign * f64::from(p * y))
            .collect()
    }

    /// `D_ℓ` for `ℓ ∈ 1..=len+1`, replayed from the nearest stored snapshot
    /// when only round starts are kept.
    pub fn distribution(&self, step: usize) -> Result<Cow<'_, WeightDistribution>> {
        if step == 0 || step > self.steps.len() + 1 {
            return Err(param(format!(
                "distribution index {step} outside 1..={}",
                self.steps.len() + 1
            )));
        }
        match self.snapshots {
            SnapshotMode::EveryStep => Ok(Cow::Borrowed(&self.distributions[step - 1])),
            SnapshotMode::RoundStarts => {
                let r = self.params.steps_per_round;
                let k = (step - 1) / r;
                if step == self.steps.len() + 1 {
                    return Ok(Cow::Borrowed(self.distributions.last().expect("final snapshot")));
                }
                let mut d = self.distributions[k].clone();
                for ell in (k * r + 1)..step {
                    let rec = &self.steps[ell - 1];
                    let preds = self.signed_predictions(ell);
                    d = boost_step_predictions(&d, &preds, &self.labels, rec.alpha)?.0;
                }
                Ok(Cow::Owned(d))
            }
        }
    }

    fn signed_predictions(&self, step: usize) -> Cow<'_, [i8]> {
        let rec = &self.steps[step - 1];
        let body = &self.bodies[rec.hypothesis_id];
        if rec.hypothesis.is_negated() {
            Cow::Owned(body.iter().map(|p| -p).collect())
        } else {
            Cow::Borrowed(body)
        }
    }

    /// `Σ_{r} ln Z_{kR+r}` for every round `k`.
    pub fn round_log_z_products(&self) -> Vec<f64> {
        (0..self.num_rounds())
            .map(|k| neumaier_sum(self.round_steps(k).iter().map(|s| s.z.ln())))
            .collect()
    }

    /// `Σ_ℓ ln Z_ℓ`.
    pub fn log_z_product(&self) -> f64 {
        neumaier_sum(self.steps.iter().map(|s| s.z.ln()))
    }

    /// The voting classifier `g` with one term per step.
    pub fn classifier(&self) -> LinearClassifier {
        LinearClassifier::new(
            self.steps
                .iter()
                .map(|s| (s.alpha, s.hypothesis.clone()))
                .collect(),
        )
        .expect("step coefficients are non-negative")
    }
}

/// Appends steps to a trace, maintaining the current distribution.
#[derive(Debug)]
pub struct TraceBuilder {
    trace: BoostTrace,
    current: WeightDistribution,
    body_ids: Vec<(Provenance, usize)>,
}

impl TraceBuilder {
    pub fn new(params: TraceParams, sample: &LabeledSample, snapshots: SnapshotMode) -> Result<Self> {
        if params.steps_per_round == 0 {
            return Err(param("steps_per_round must be at least 1"));
        }
        let d1 = WeightDistribution::uniform(sample.len())?;
        Ok(Self {
            trace: BoostTrace {
                params,
                steps: Vec::new(),
                weak_calls: 0,
                advantage_shortfalls: 0,
                min_trained_advantage: f64::INFINITY,
                labels: sample.labels().to_vec(),
                bodies: Vec::new(),
                snapshots,
                distributions: vec![d1.clone()],
            },
            current: d1,
            body_ids: Vec::new(),
        })
    }

    pub fn current(&self) -> &WeightDistribution {
        &self.current
    }

    pub fn steps_taken(&self) -> usize {
        self.trace.steps.len()
    }

    fn record_calls(&mut self, calls: u64, shortfalls: u64, min_adv: f64) {
        self.trace.weak_calls += calls;
        self.trace.advantage_shortfalls += shortfalls;
        self.trace.min_trained_advantage = self.trace.min_trained_advantage.min(min_adv);
    }

    fn body_id(&mut self, entry: Option<&PoolEntry>, predictions: &Arc<[i8]>) -> usize {
        if let Some(e) = entry {
            let key = Provenance {
                negated: false,
                ..e.provenance
            };
            if let Some((_, id)) = self.body_ids.iter().rev().find(|(p, _)| *p == key) {
                return *id;
            }
            self.body_ids.push((key, self.trace.bodies.len()));
        }
        self.trace.bodies.push(Arc::clone(predictions));
        self.trace.bodies.len() - 1
    }

    /// Applies one step with hypothesis `h` (whose un-negated body has
    /// `body_predictions` on the sample).
    #[allow(clippy::too_many_arguments)]
    fn apply(
        &mut self,
        hypothesis: Hypothesis,
        body_predictions: Arc<[i8]>,
        entry: Option<&PoolEntry>,
        provenance: Option<Provenance>,
        alpha: f64,
        pool_best_advantage: f64,
    ) -> Result<&StepRecord> {
        let signed: Vec<i8> = if hypothesis.is_negated() {
            body_predictions.iter().map(|p| -p).collect()
        } else {
            body_predictions.to_vec()
        };
        let labels = &self.trace.labels;
        let wrong: f64 = signed
            .iter()
            .zip(labels)
            .zip(self.current.weights())
            .filter(|((p, y), _)| p != y)
            .map(|(_, w)| w)
            .sum();
        let (next, z) = boost_step_predictions(&self.current, &signed, labels, alpha)?;
        let id = self.body_id(entry, &body_predictions);
        let step = self.trace.steps.len() + 1;
        let r = self.trace.params.steps_per_round;
        self.trace.steps.push(StepRecord {
            step,
            round: (step - 1) / r,
            sub_round: (step - 1) % r + 1,
            alpha,
            z,
            accepted: alpha > 0.0,
            hypothesis,
            hypothesis_id: id,
            provenance,
            advantage: 0.5 - wrong,
            pool_best_advantage,
        });
        let end_of_round = step.is_multiple_of(r);
        match self.trace.snapshots {
            SnapshotMode::EveryStep => self.trace.distributions.push(next.clone()),
            SnapshotMode::RoundStarts if end_of_round => self.trace.distributions.push(next.clone()),
            SnapshotMode::RoundStarts => {}
        }
        self.current = next;
        Ok(self.trace.steps.last().expect("just pushed"))
    }

    /// Appends a step with an arbitrary hypothesis, for hand-built traces.
    pub fn push(&mut self, h: &Hypothesis, alpha: f64, sample: &LabeledSample) -> Result<&StepRecord> {
        let body = if h.is_negated() { h.negate() } else { h.clone() };
        let preds: Arc<[i8]> = body.predictions(sample)?.into();
        self.apply(h.clone(), preds, None, None, alpha, f64::NAN)
    }

    pub fn finish(mut self) -> BoostTrace {
        if self.trace.snapshots == SnapshotMode::RoundStarts
            && !self.trace.steps.len().is_multiple_of(self.trace.params.steps_per_round)
        {
            self.trace.distributions.push(self.current);
        }
        self.trace
    }
}

/// Everything [`run`] produces.
#[derive(Clone, Debug)]
pub struct BoostOutcome {
    pub classifier: LinearClassifier,
    pub trace: BoostTrace,
    /// Every step was skipped, so `g` is undefined.
    pub degenerate: bool,
}

/// Runs the parallel boosting algorithm.
pub fn run(config: &EngineConfig, sample: &LabeledSample, learner: &dyn WeakLearner) -> Result<BoostOutcome> {
    config.validate(sample.len())?;
    let alpha = learning_rate(config.gamma)?;
    let n = match config.subsample {
        Subsample::Fixed(n) => Some(n),
        Subsample::FromCapacity { c_n } => {
            Some(subsample_size(learner.vc_dimension().max(1.0), config.gamma, c_n)?)
        }
        Subsample::FullSample => None,
    };
    let params = TraceParams {
        gamma: config.gamma,
        alpha,
        rounds: config.rounds,
        steps_per_round: config.steps_per_round,
        pool_size: config.pool_size,
        subsample_size: n,
        seed: config.seed,
    };
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;

    let big_r = config.steps_per_round;
    let per_sub = config.calls_per_sub_round();
    let labels = sample.labels();
    let full: Vec<usize> = (0..sample.len()).collect();
    let mut builder = TraceBuilder::new(params, sample, config.snapshots)?;

    for k in 0..config.rounds {
        let round_start = builder.current().clone();
        let drawer = match n {
            Some(_) => Some(SubsampleDrawer::new(&round_start)?),
            None => None,
        };
        let tasks: Vec<(usize, usize)> = (1..=big_r)
            .flat_map(|r| (0..per_sub).map(move |j| (r, j)))
            .collect();
        let entries: Vec<PoolEntry> = threads.install(|| {
            tasks
                .par_iter()
                .map(|&(r, j)| -> Result<PoolEntry> {
                    let subsample = match (&drawer, n) {
                        (Some(dr), Some(n)) => {
                            let mut stream = rng::stream(config.seed, &[k as u64, r as u64, j as u64]);
                            Cow::Owned(dr.draw(n, &mut stream)?)
                        }
                        _ => Cow::Borrowed(full.as_slice()),
                    };
                    let trained = learner.train(sample, &subsample).map_err(|e| {
                        Error::Construction(format!(
                            "weak learner failed at round {k}, sub-round {r}, call {j}: {e}"
                        ))
                    })?;
                    Ok(PoolEntry {
                        predictions: trained.hypothesis.predictions(sample)?.into(),
                        hypothesis: trained.hypothesis,
                        trained_advantage: trained.advantage,
                        provenance: Provenance {
                            round: k,
                            sub_round: r,
                            call: j,
                            negated: false,
                        },
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let shortfalls = entries
            .iter()
            .filter(|e| e.trained_advantage < config.gamma)
            .count() as u64;
        let min_adv = entries
            .iter()
            .map(|e| e.trained_advantage)
            .fold(f64::INFINITY, f64::min);
        builder.record_calls(entries.len() as u64, shortfalls, min_adv);

        let mut pools: Vec<RoundPool> = Vec::with_capacity(big_r);
        let mut it = entries.into_iter();
        for r in 1..=big_r {
            pools.push(RoundPool::new(k, r, it.by_ref().take(per_sub).collect())?);
        }

        for pool in &pools {
            let scan = scan_pool(pool, builder.current(), labels, config.gamma, config.selection);
            let (idx, step_alpha) = match scan.selected {
                Some((idx, _)) => (idx, alpha),
                None => (0, 0.0),
            };
            let member = pool.member(idx);
            builder.apply(
                member.hypothesis(),
                Arc::clone(&member.entry.predictions),
                Some(member.entry),
                Some(member.provenance()),
                step_alpha,
                scan.best_advantage,
            )?;
        }
        log::debug!(
            "round {k}: log prod Z = {:.6}",
            neumaier_sum(builder.trace.steps[k * big_r..].iter().map(|s| s.z.ln()))
        );
    }

    let trace = builder.finish();
    let classifier = trace.classifier();
    let degenerate = classifier.is_degenerate();
    if degenerate {
        log::warn!("every step was skipped; the classifier is degenerate");
    }
    Ok(BoostOutcome {
        classifier,
        trace,
        degenerate,
    })
}

/// [`run`] with a learner built from `spec` for `sample`.
pub fn run_with_spec(config: &EngineConfig, sample: &LabeledSample, spec: &WeakLearnerSpec) -> Result<BoostOutcome> {
    let learner = spec.build(sample)?;
    run(config, sample, learner.as_ref())
}

/// Compensated summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Exponential loss `Σ_i exp(−c(x_i) Σ_ℓ α_ℓ h_ℓ(x_i))`, returned as its
/// natural log to avoid overflow.
pub fn log_exp_loss(trace: &BoostTrace) -> f64 {
    let m = trace.labels.len();
    let mut exponents = vec![Vec::with_capacity(trace.steps.len()); m];
    for s in trace.steps.iter().filter(|s| s.alpha > 0.0) {
        for (i, a) in trace.step_agreements(s.step).into_iter().enumerate() {
            exponents[i].push(-s.alpha * a);
        }
    }
    let e: Vec<f64> = exponents.into_iter().map(neumaier_sum).collect();
    let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + neumaier_sum(e.iter().map(|x| (x - max).exp())).ln()
}

/// Margin certification and trace cross-checks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginReport {
    pub degenerate: bool,
    pub min_margin: Option<f64>,
    /// Points with margin below `γ/8`.
    pub below_gamma_over_8: Option<usize>,
    pub log_exp_loss: f64,
    /// `ln(m Π Z_ℓ)`.
    pub log_m_prod_z: f64,
    /// `|Σ exp(−c g) / (m Π Z) − 1|`.
    pub exp_loss_rel_err: f64,
    pub exp_loss_ok: bool,
    /// Largest `Z_ℓ − √(1 − γ²)` over accepted steps (≤ 0 when the bound holds).
    pub max_accepted_z_excess: f64,
    pub z_bound_ok: bool,
    /// Rounds with `Π_r Z_{kR+r} < exp(−γ²R/2)`.
    pub rounds_meeting_z_product: usize,
    pub rounds: usize,
    /// `m exp(−pRγ²/4)`.
    pub counting_bound: f64,
    /// Whether fewer than `counting_bound` points fall below `γ/8`; only
    /// asserted when every round met the product event.
    pub counting_bound_holds: Option<bool>,
}

impl MarginReport {
    /// All checks that apply to this trace passed.
    pub fn passed(&self) -> bool {
        self.exp_loss_ok && self.z_bound_ok && self.counting_bound_holds != Some(false)
    }
}

/// Relative tolerance of the exponential-loss identity.
pub const EXP_LOSS_TOLERANCE: f64 = 1e-9;
/// Slack on the per-step bound `Z ≤ √(1 − γ²)`.
pub const Z_BOUND_TOLERANCE: f64 = 1e-12;

pub fn certify_margins(g: &LinearClassifier, trace: &BoostTrace, sample: &LabeledSample) -> Result<MarginReport> {
    if trace.labels.as_slice() != sample.labels() {
        return Err(param("trace was produced on a different sample"));
    }
    let p = &trace.params;
    let gamma = p.gamma;
    let m = sample.len() as f64;
    let degenerate = g.is_degenerate();
    let margins = if degenerate { None } else { Some(g.margins(sample)?) };

    let log_loss = log_exp_loss(trace);
    let log_rhs = m.ln() + trace.log_z_product();
    let rel = (log_loss - log_rhs).exp_m1().abs();

    let bound = (1.0 - gamma * gamma).sqrt();
    let max_excess = trace
        .steps
        .iter()
        .filter(|s| s.accepted)
        .map(|s| s.z - bound)
        .fold(f64::NEG_INFINITY, f64::max);

    let target = -gamma * gamma * p.steps_per_round as f64 / 2.0;
    let round_logs = trace.round_log_z_products();
    let meeting = round_logs.iter().filter(|&&l| l < target).count();
    let total_steps = trace.steps.len() as f64;
    let counting_bound = m * (-total_steps * gamma * gamma / 4.0).exp();
    let below = margins.as_ref().map(|mg| mg.count_below(gamma / 8.0));
    let counting_bound_holds = match (below, meeting == round_logs.len() && !round_logs.is_empty()) {
        (Some(b), true) => Some((b as f64) < counting_bound),
        _ => None,
    };
    Ok(MarginReport {
        degenerate,
        min_margin: margins.as_ref().map(|mg| mg.min()),
        below_gamma_over_8: below,
        log_exp_loss: log_loss,
        log_m_prod_z: log_rhs,
        exp_loss_rel_err: rel,
        exp_loss_ok: rel <= EXP_LOSS_TOLERANCE,
        max_accepted_z_excess: max_excess,
        z_bound_ok: max_excess <= Z_BOUND_TOLERANCE,
        rounds_meeting_z_product: meeting,
        rounds: round_logs.len(),
        counting_bound,
        counting_bound_holds,
    })
}

/// `⌈4 ln m / (γ² R)⌉`, the number of rounds after which a run whose every
/// round meets the product event has all margins above `γ/8`.
pub fn rounds_for_margin(m: usize, gamma: f64, steps_per_round: usize) -> usize {
    let x = 4.0 * (m as f64).ln() / (gamma * gamma * steps_per_round as f64);
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * x.max(1.0) {
        nearest as usize
    } else {
        x.ceil() as usize
    }
}

/// `R · ⌈exp(16 C_n d R)⌉ · ⌈ln(R/δ)⌉` as a real (it overflows integers
/// almost immediately).
pub fn pool_size_for_round_guarantee(steps_per_round: usize, c_n: f64, d: f64, delta: f64) -> f64 {
    let r = steps_per_round as f64;
    r * (16.0 * c_n * d * r).exp().ceil() * (r / delta).ln().ceil()
}
