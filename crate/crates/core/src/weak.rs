//! Weak learners: exhaustive decision stumps, ERM over a finite class of
//! table hypotheses, and the planted-vote generator whose class is a
//! guaranteed weak learner.
//!
//! Every learner here is deterministic empirical risk minimization over the
//! uniform distribution on a multiset `T` of sample indices. The advantage it
//! reports is measured on `T`, never assumed.

use rand::seq::index;
use rand::Rng;

use crate::error::{param, Error, Result};
use crate::rng;
use crate::types::{Hypothesis, HypothesisBody, LabeledSample, Points};

/// A trained hypothesis and its empirical advantage `½ − loss_T(h)`.
#[derive(Clone, Debug)]
pub struct Trained {
    pub hypothesis: Hypothesis,
    pub advantage: f64,
    /// Position of the hypothesis in its finite class, when there is one.
    pub class_id: Option<usize>,
}

/// Anything the boosting engine can query with a subsample.
pub trait WeakLearner: Sync {
    /// Trains on `Uniform(T)` where `T` is the multiset `subsample` of
    /// indices into `sample`.
    fn train(&self, sample: &LabeledSample, subsample: &[usize]) -> Result<Trained>;

    /// Reported capacity proxy `d` used to size subsamples.
    fn vc_dimension(&self) -> f64;

    fn name(&self) -> &'static str;
}

/// Exhaustive threshold stumps over every feature.
#[derive(Clone, Copy, Debug)]
pub struct StumpLearner {
    num_features: usize,
    num_points: usize,
}

impl StumpLearner {
    pub fn for_sample(sample: &LabeledSample) -> Result<Self> {
        if !matches!(sample.points(), Points::Features(_)) {
            return Err(param("stumps need feature vectors, sample has abstract indices"));
        }
        Ok(Self {
            num_features: sample.num_features(),
            num_points: sample.len(),
        })
    }
}

impl WeakLearner for StumpLearner {
    fn train(&self, sample: &LabeledSample, subsample: &[usize]) -> Result<Trained> {
        train_stump(sample, subsample)
    }

    /// `log₂` of the number of distinct stump labelings of the sample,
    /// `2·f·(m + 1)`.
    fn vc_dimension(&self) -> f64 {
        (2.0 * self.num_features as f64 * (self.num_points as f64 + 1.0)).log2()
    }

    fn name(&self) -> &'static str {
        "stump"
    }
}

/// Empirical-error-minimizing stump over all `(feature, threshold, polarity)`.
///
/// Thresholds are `−∞`, the midpoints between consecutive distinct values,
/// and `+∞`. Ties are broken lexicographically by feature, then threshold,
/// then polarity (`−1` before `+1`).
pub fn train_stump(sample: &LabeledSample, subsample: &[usize]) -> Result<Trained> {
    if subsample.is_empty() {
        return Err(param("cannot train on an empty multiset"));
    }
    let rows = match sample.points() {
        Points::Features(rows) => rows,
        Points::Indices(_) => {
            return Err(param("stumps need feature vectors, sample has abstract indices"))
        }
    };
    if let Some(&i) = subsample.iter().find(|&&i| i >= sample.len()) {
        return Err(param(format!("subsample index {i} outside sample of {}", sample.len())));
    }
    let n = subsample.len();
    let labels = sample.labels();
    let total_pos = subsample.iter().filter(|&&i| labels[i] == 1).count();
    let total_neg = n - total_pos;

    // (errors, feature, threshold, polarity)
    let mut best: Option<(usize, usize, f64, i8)> = None;
    let mut consider = |errors: usize, feature: usize, threshold: f64, polarity: i8| {
        if best.is_none_or(|(e, ..)| errors < e) {
            best = Some((errors, feature, threshold, polarity));
        }
    };

    let mut column: Vec<(f64, i8)> = Vec::with_capacity(n);
    #[allow(clippy::needless_range_loop)]
    for feature in 0..sample.num_features() {
        column.clear();
        for &i in subsample {
            let v = rows[i][feature];
            if v.is_nan() {
                return Err(param(format!("feature {feature} of point {i} is NaN")));
            }
            column.push((v, labels[i]));
        }
        column.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        // Everything is "above" −∞: polarity +1 errs on every negative.
        let (mut left_pos, mut left_neg) = (0usize, 0usize);
        let errors_plus = |lp: usize, ln: usize| lp + (total_neg - ln);
        let e = errors_plus(0, 0);
        consider(n - e, feature, f64::NEG_INFINITY, -1);
        consider(e, feature, f64::NEG_INFINITY, 1);

        let mut k = 0;
        while k < n {
            let value = column[k].0;
            while k < n && column[k].0 == value {
                if column[k].1 == 1 {
                    left_pos += 1;
                } else {
                    left_neg += 1;
                }
                k += 1;
            }
            let threshold = if k < n {
                midpoint(value, column[k].0)
            } else {
                f64::INFINITY
            };
            let e = errors_plus(left_pos, left_neg);
            consider(n - e, feature, threshold, -1);
            consider(e, feature, threshold, 1);
        }
    }

    let (errors, feature, threshold, polarity) = best.ok_or_else(|| {
        Error::Parameter("sample has no features to threshold".into())
    })?;
    debug_assert!(total_pos + total_neg == n);
    Ok(Trained {
        hypothesis: Hypothesis::stump(feature, threshold, polarity)?,
        advantage: 0.5 - errors as f64 / n as f64,
        class_id: None,
    })
}

/// A threshold strictly between `lo < hi` (so `lo` falls below, `hi` above).
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi || !mid.is_finite() {
        lo
    } else {
        mid
    }
}

/// A finite hypothesis class with stable ids (positions).
#[derive(Clone, Debug)]
pub struct FiniteClass {
    hypotheses: Vec<Hypothesis>,
}

impl FiniteClass {
    pub fn new(hypotheses: Vec<Hypothesis>) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(param("hypothesis class is empty"));
        }
        Ok(Self { hypotheses })
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    /// `log₂ |H|`, an upper bound on the VC dimension of a finite class.
    pub fn vc_dimension(&self) -> f64 {
        (self.hypotheses.len() as f64).log2()
    }

    /// Prediction rows of every member on `sample`.
    pub fn predictions(&self, sample: &LabeledSample) -> Result<Vec<Vec<i8>>> {
        self.hypotheses.iter().map(|h| h.predictions(sample)).collect()
    }
}

/// ERM over a finite class given precomputed prediction rows. Returns the
/// lowest id among the minimizers and its empirical advantage.
pub fn erm_over_predictions(
    rows: &[Vec<i8>],
    labels: &[i8],
    subsample: &[usize],
) -> Result<(usize, f64)> {
    if rows.is_empty() {
        return Err(param("hypothesis class is empty"));
    }
    if subsample.is_empty() {
        return Err(param("cannot train on an empty multiset"));
    }
    if let Some(&i) = subsample.iter().find(|&&i| i >= labels.len()) {
        return Err(param(format!("subsample index {i} outside sample of {}", labels.len())));
    }
    let mut best = (usize::MAX, 0usize);
    for (id, row) in rows.iter().enumerate() {
        let errors = subsample.iter().filter(|&&i| row[i] != labels[i]).count();
        if errors < best.0 {
            best = (errors, id);
        }
    }
    Ok((best.1, 0.5 - best.0 as f64 / subsample.len() as f64))
}

/// ERM over `class` on the multiset `subsample`.
pub fn train_erm(
    sample: &LabeledSample,
    subsample: &[usize],
    class: &FiniteClass,
) -> Result<Trained> {
    let rows = class.predictions(sample)?;
    let (id, advantage) = erm_over_predictions(&rows, sample.labels(), subsample)?;
    Ok(Trained {
        hypothesis: class.hypotheses[id].clone(),
        advantage,
        class_id: Some(id),
    })
}

/// ERM learner bound to one sample, with the class predictions cached.
#[derive(Clone, Debug)]
pub struct ErmLearner {
    class: FiniteClass,
    rows: Vec<Vec<i8>>,
}

impl ErmLearner {
    pub fn new(class: FiniteClass, sample: &LabeledSample) -> Result<Self> {
        let rows = class.predictions(sample)?;
        Ok(Self { class, rows })
    }

    pub fn class(&self) -> &FiniteClass {
        &self.class
    }
}

impl WeakLearner for ErmLearner {
    fn train(&self, sample: &LabeledSample, subsample: &[usize]) -> Result<Trained> {
        if self.rows.first().is_some_and(|r| r.len() != sample.len()) {
            return Err(param("ERM learner was bound to a different sample"));
        }
        let (id, advantage) = erm_over_predictions(&self.rows, sample.labels(), subsample)?;
        Ok(Trained {
            hypothesis: self.class.hypotheses[id].clone(),
            advantage,
            class_id: Some(id),
        })
    }

    fn vc_dimension(&self) -> f64 {
        self.class.vc_dimension()
    }

    fn name(&self) -> &'static str {
        "finite-class-erm"
    }
}

#[derive(Clone, Debug)]
pub enum WeakLearnerKind {
    Stump,
    FiniteClassErm(FiniteClass),
}

/// Which learner to use and the advantage `γ` the caller will assume of it.
#[derive(Clone, Debug)]
pub struct WeakLearnerSpec {
    pub kind: WeakLearnerKind,
    pub gamma_target: f64,
}

impl WeakLearnerSpec {
    pub fn new(kind: WeakLearnerKind, gamma_target: f64) -> Result<Self> {
        if !(gamma_target > 0.0 && gamma_target < 0.5) {
            return Err(param(format!(
                "gamma_target must lie in (0, 1/2), got {gamma_target}"
            )));
        }
        Ok(Self { kind, gamma_target })
    }

    /// Instantiates the learner for `sample`.
    pub fn build(&self, sample: &LabeledSample) -> Result<Box<dyn WeakLearner>> {
        Ok(match &self.kind {
            WeakLearnerKind::Stump => Box::new(StumpLearner::for_sample(sample)?),
            WeakLearnerKind::FiniteClassErm(class) => {
                Box::new(ErmLearner::new(class.clone(), sample)?)
            }
        })
    }
}

/// A sample labeled by the sign of a convex vote of class members, with every
/// point's vote margin at least `gamma_star`.
///
/// For any distribution `D`, `Σ w_i E_D[c·h_i] ≥ γ*`, so some voter has
/// correlation `≥ γ*`, i.e. loss `≤ ½ − γ*/2`; ERM over the class is then a
/// `γ*/2`-weak learner.
#[derive(Clone, Debug)]
pub struct PlantedVoteInstance {
    pub sample: LabeledSample,
    pub class: FiniteClass,
    /// Class ids of the voters, ascending.
    pub voters: Vec<usize>,
    pub vote_weights: Vec<f64>,
    /// The requested minimum vote margin.
    pub gamma_star: f64,
    /// The achieved minimum vote margin, `≥ gamma_star`.
    pub planted_margin: f64,
}

impl PlantedVoteInstance {
    /// `Σ w_i h_i(x)` for point `x`.
    pub fn vote(&self, x: usize) -> f64 {
        self.voters
            .iter()
            .zip(&self.vote_weights)
            .map(|(&v, w)| match self.class.hypotheses[v].body() {
                HypothesisBody::Table(row) => w * f64::from(row[x]),
                HypothesisBody::Stump { .. } => unreachable!("planted classes are tables"),
            })
            .sum()
    }

    pub fn min_vote_margin(&self) -> f64 {
        (0..self.sample.len())
            .map(|x| f64::from(self.sample.label(x)) * self.vote(x))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Resampling attempts allowed per point before giving up.
pub const PLANT_RETRY_BUDGET: usize = 10_000;

pub fn plant_vote_instance(
    m: usize,
    class_size: usize,
    voters: usize,
    gamma_star: f64,
    seed: u64,
) -> Result<PlantedVoteInstance> {
    if m == 0 {
        return Err(param("planted instance needs at least one point"));
    }
    if voters == 0 || voters > class_size {
        return Err(param(format!(
            "need 1 <= voters <= class_size, got voters={voters}, class_size={class_size}"
        )));
    }
    if !(gamma_star > 0.0 && gamma_star <= 1.0) {
        return Err(param(format!("gamma_star must lie in (0, 1], got {gamma_star}")));
    }
    let mut rng = rng::stream(seed, &[0x504c_414e]);
    let mut voter_ids = index::sample(&mut rng, class_size, voters).into_vec();
    voter_ids.sort_unstable();
    let vote_weights = if voters == 1 {
        vec![1.0]
    } else {
        let raw: Vec<f64> = (0..voters).map(|_| rng.gen_range(0.5..1.5)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    };

    let mut rows = vec![vec![0i8; m]; class_size];
    let mut labels = Vec::with_capacity(m);
    let mut planted_margin = f64::INFINITY;
    let mut column = vec![0i8; class_size];
    for x in 0..m {
        let mut accepted = None;
        for _ in 0..PLANT_RETRY_BUDGET {
            for c in column.iter_mut() {
                *c = if rng.gen::<bool>() { 1 } else { -1 };
            }
            let vote: f64 = voter_ids
                .iter()
                .zip(&vote_weights)
                .map(|(&v, w)| w * f64::from(column[v]))
                .sum();
            if vote.abs() >= gamma_star {
                accepted = Some(vote);
                break;
            }
        }
        let vote = accepted.ok_or_else(|| {
            Error::Construction(format!(
                "point {x}: no column with vote margin >= {gamma_star} after \
                 {PLANT_RETRY_BUDGET} draws ({voters} voters)"
            ))
        })?;
        for (row, &c) in rows.iter_mut().zip(&column) {
            row[x] = c;
        }
        labels.push(if vote > 0.0 { 1 } else { -1 });
        planted_margin = planted_margin.min(vote.abs());
    }
    let class = FiniteClass::new(
        rows.into_iter()
            .map(Hypothesis::table)
            .collect::<Result<Vec<_>>>()?,
    )?;
    Ok(PlantedVoteInstance {
        sample: LabeledSample::from_indices(labels)?,
        class,
        voters: voter_ids,
        vote_weights,
        gamma_star,
        planted_margin,
    })
}
