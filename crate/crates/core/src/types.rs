//! Domain types shared by every module: weight distributions, hypotheses,
//! labeled samples and the normalized linear (voting) classifier.

use std::fmt;
use std::sync::Arc;

use crate::error::{param, Error, Result};

/// Tolerance on `Σ weights = 1` accepted by [`WeightDistribution::from_weights`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Learning rate `α(γ) = ½ ln((½ + γ/2)/(½ − γ/2))`.
///
/// The ratio simplifies to `(1 + γ)/(1 − γ)`, so `α = artanh(γ)`; the
/// inverse hyperbolic tangent keeps full precision for tiny `γ`.
/// Always `0 < α < 2γ` on the open interval.
pub fn learning_rate(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(param(format!("gamma must lie in (0, 1/2), got {gamma}")));
    }
    Ok(gamma.atanh())
}

/// A probability vector over training indices.
///
/// The support is `{i : weights[i] > 0}`; boosting updates multiply by a
/// strictly positive factor and renormalize, so the support is fixed for the
/// lifetime of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightDistribution {
    weights: Vec<f64>,
}

impl WeightDistribution {
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(param("distribution over an empty index set"));
        }
        Ok(Self {
            weights: vec![1.0 / m as f64; m],
        })
    }

    pub fn point_mass(m: usize, index: usize) -> Result<Self> {
        if index >= m {
            return Err(param(format!("point mass at {index} outside [0, {m})")));
        }
        let mut weights = vec![0.0; m];
        weights[index] = 1.0;
        Ok(Self { weights })
    }

    /// Wraps already-normalized weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        validate_entries(&weights)?;
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(param(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self { weights })
    }

    /// Divides arbitrary non-negative masses by their total.
    pub fn normalized(mut masses: Vec<f64>) -> Result<Self> {
        validate_entries(&masses)?;
        let sum: f64 = masses.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(param(format!("cannot normalize masses with total {sum}")));
        }
        for w in &mut masses {
            *w /= sum;
        }
        Ok(Self { weights: masses })
    }

    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn support_size(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    /// First index where exactly one of the two distributions has mass, or
    /// `None` when the supports coincide.
    pub fn support_mismatch(&self, other: &Self) -> Option<usize> {
        if self.len() != other.len() {
            return Some(self.len().min(other.len()));
        }
        self.weights
            .iter()
            .zip(&other.weights)
            .position(|(&a, &b)| (a > 0.0) != (b > 0.0))
    }

    pub fn same_support(&self, other: &Self) -> bool {
        self.support_mismatch(other).is_none()
    }
}

fn validate_entries(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(param("distribution over an empty index set"));
    }
    if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(param(format!(
            "weight {i} is {} (must be finite and non-negative)",
            weights[i]
        )));
    }
    Ok(())
}

/// One input to a hypothesis: either a feature vector or an abstract domain
/// index (used by table hypotheses over finite domains).
#[derive(Clone, Copy, Debug)]
pub enum Point<'a> {
    Features(&'a [f64]),
    Index(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Points {
    Features(Vec<Vec<f64>>),
    Indices(Vec<usize>),
}

impl Points {
    pub fn len(&self) -> usize {
        match self {
            Points::Features(rows) => rows.len(),
            Points::Indices(ix) => ix.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Training set `S = {(x_i, c(x_i))}` with labels in `{−1, +1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    points: Points,
    labels: Vec<i8>,
}

impl LabeledSample {
    pub fn new(points: Points, labels: Vec<i8>) -> Result<Self> {
        if labels.is_empty() {
            return Err(param("sample must contain at least one point"));
        }
        if points.len() != labels.len() {
            return Err(param(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y != 1 && y != -1) {
            return Err(param(format!("label {i} is {}, expected ±1", labels[i])));
        }
        if let Points::Features(rows) = &points {
            let width = rows[0].len();
            if let Some(i) = rows.iter().position(|r| r.len() != width) {
                return Err(param(format!(
                    "row {i} has {} features, expected {width}",
                    rows[i].len()
                )));
            }
        }
        Ok(Self { points, labels })
    }

    pub fn from_features(rows: Vec<Vec<f64>>, labels: Vec<i8>) -> Result<Self> {
        Self::new(Points::Features(rows), labels)
    }

    /// Sample whose `i`-th point is the domain index `i`.
    pub fn from_indices(labels: Vec<i8>) -> Result<Self> {
        let ix = (0..labels.len()).collect();
        Self::new(Points::Indices(ix), labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> i8 {
        self.labels[i]
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn point(&self, i: usize) -> Point<'_> {
        match &self.points {
            Points::Features(rows) => Point::Features(&rows[i]),
            Points::Indices(ix) => Point::Index(ix[i]),
        }
    }

    pub fn num_features(&self) -> usize {
        match &self.points {
            Points::Features(rows) => rows[0].len(),
            Points::Indices(_) => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum HypothesisBody {
    /// Predicts `polarity` when `x[feature] > threshold`, else `−polarity`.
    /// Ties at the threshold go to `−polarity`.
    Stump {
        feature: usize,
        threshold: f64,
        polarity: i8,
    },
    /// Explicit prediction row over a finite domain.
    Table(Vec<i8>),
}

/// A ±1-valued predictor. Cloning and negating share the body.
#[derive(Clone, Debug)]
pub struct Hypothesis {
    body: Arc<HypothesisBody>,
    negated: bool,
}

impl PartialEq for Hypothesis {
    fn eq(&self, other: &Self) -> bool {
        self.negated == other.negated
            && (Arc::ptr_eq(&self.body, &other.body) || self.body == other.body)
    }
}

impl Hypothesis {
    pub fn stump(feature: usize, threshold: f64, polarity: i8) -> Result<Self> {
        if polarity != 1 && polarity != -1 {
            return Err(param(format!("stump polarity must be ±1, got {polarity}")));
        }
        if threshold.is_nan() {
            return Err(param("stump threshold is NaN"));
        }
        Ok(Self::from_body(HypothesisBody::Stump {
            feature,
            threshold,
            polarity,
        }))
    }

    pub fn table(row: Vec<i8>) -> Result<Self> {
        if let Some(i) = row.iter().position(|&v| v != 1 && v != -1) {
            return Err(param(format!("table entry {i} is {}, expected ±1", row[i])));
        }
        Ok(Self::from_body(HypothesisBody::Table(row)))
    }

    pub fn from_body(body: HypothesisBody) -> Self {
        Self {
            body: Arc::new(body),
            negated: false,
        }
    }

    pub fn body(&self) -> &HypothesisBody {
        &self.body
    }

    pub fn is_negated(&self) -> bool {
        self.negated
    }

    /// `−h`, sharing the underlying body.
    pub fn negate(&self) -> Self {
        Self {
            body: Arc::clone(&self.body),
            negated: !self.negated,
        }
    }

    pub fn evaluate(&self, x: Point<'_>) -> Result<i8> {
        let raw = match (&*self.body, x) {
            (
                HypothesisBody::Stump {
                    feature,
                    threshold,
                    polarity,
                },
                Point::Features(v),
            ) => {
                let value = v.get(*feature).ok_or_else(|| {
                    Error::Evaluation(format!(
                        "stump reads feature {feature} of a {}-dimensional point",
                        v.len()
                    ))
                })?;
                if *value > *threshold {
                    *polarity
                } else {
                    -*polarity
                }
            }
            (HypothesisBody::Table(row), Point::Index(i)) => *row.get(i).ok_or_else(|| {
                Error::Evaluation(format!("table of length {} has no entry {i}", row.len()))
            })?,
            (HypothesisBody::Table(_), Point::Features(_)) => {
                return Err(Error::Evaluation(
                    "table hypothesis evaluated on a feature vector".into(),
                ))
            }
            (HypothesisBody::Stump { .. }, Point::Index(_)) => {
                return Err(Error::Evaluation(
                    "stump evaluated on an abstract domain index".into(),
                ))
            }
        };
        Ok(if self.negated { -raw } else { raw })
    }

    /// Predictions on every point of `sample`, in sample order.
    pub fn predictions(&self, sample: &LabeledSample) -> Result<Vec<i8>> {
        (0..sample.len())
            .map(|i| self.evaluate(sample.point(i)))
            .collect()
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            write!(f, "-")?;
        }
        match &*self.body {
            HypothesisBody::Stump {
                feature,
                threshold,
                polarity,
            } => write!(f, "stump(x[{feature}] > {threshold} => {polarity:+})"),
            HypothesisBody::Table(row) => write!(f, "table[{}]", row.len()),
        }
    }
}

/// `Pr_{i∼D}[h(x_i) ≠ c(x_i)]`.
pub fn weighted_loss(h: &Hypothesis, d: &WeightDistribution, sample: &LabeledSample) -> Result<f64> {
    if d.len() != sample.len() {
        return Err(param(format!(
            "distribution over {} indices, sample of {}",
            d.len(),
            sample.len()
        )));
    }
    let preds = h.predictions(sample)?;
    Ok(loss_of_predictions(&preds, sample.labels(), d.weights()))
}

/// Weighted disagreement mass of a prediction vector.
pub fn loss_of_predictions(preds: &[i8], labels: &[i8], weights: &[f64]) -> f64 {
    preds
        .iter()
        .zip(labels)
        .zip(weights)
        .filter(|((p, y), _)| p != y)
        .map(|(_, w)| *w)
        .sum()
}

/// Weighted agreement mass of a prediction vector; the loss of `−h`.
pub fn agreement_of_predictions(preds: &[i8], labels: &[i8], weights: &[f64]) -> f64 {
    preds
        .iter()
        .zip(labels)
        .zip(weights)
        .filter(|((p, y), _)| p == y)
        .map(|(_, w)| *w)
        .sum()
}

/// `g(x) = Σ α_j h_j(x) / Σ α_j`; the voting classifier is `sign(g)`.
#[derive(Clone, Debug, Default)]
pub struct LinearClassifier {
    terms: Vec<(f64, Hypothesis)>,
}

impl LinearClassifier {
    pub fn new(terms: Vec<(f64, Hypothesis)>) -> Result<Self> {
        if let Some((a, _)) = terms.iter().find(|(a, _)| !a.is_finite() || *a < 0.0) {
            return Err(param(format!("coefficient {a} is not a finite non-negative real")));
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[(f64, Hypothesis)] {
        &self.terms
    }

    pub fn normalizer(&self) -> f64 {
        self.terms.iter().map(|(a, _)| a).sum()
    }

    pub fn is_degenerate(&self) -> bool {
        self.normalizer() <= 0.0
    }

    /// The unthresholded vote `g(x)` in `[−1, 1]`.
    pub fn score(&self, x: Point<'_>) -> Result<f64> {
        let z = self.normalizer();
        if z <= 0.0 {
            return Err(Error::Degenerate);
        }
        let mut acc = 0.0;
        for (a, h) in &self.terms {
            if *a > 0.0 {
                acc += a * f64::from(h.evaluate(x)?);
            }
        }
        Ok((acc / z).clamp(-1.0, 1.0))
    }

    /// `sign(g(x))` with `sign(0) = +1`.
    pub fn predict(&self, x: Point<'_>) -> Result<i8> {
        Ok(if self.score(x)? >= 0.0 { 1 } else { -1 })
    }

    /// Per-point margins `c(x_i) g(x_i)`.
    pub fn margins(&self, sample: &LabeledSample) -> Result<Margins> {
        let z = self.normalizer();
        if z <= 0.0 {
            return Err(Error::Degenerate);
        }
        let mut votes = vec![0.0; sample.len()];
        for (a, h) in &self.terms {
            if *a == 0.0 {
                continue;
            }
            for (i, v) in votes.iter_mut().enumerate() {
                *v += a * f64::from(h.evaluate(sample.point(i))?);
            }
        }
        let values = votes
            .iter()
            .zip(sample.labels())
            .map(|(v, &y)| (f64::from(y) * v / z).clamp(-1.0, 1.0))
            .collect();
        Ok(Margins { values })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Margins {
    pub values: Vec<f64>,
}

impl Margins {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn count_below(&self, theta: f64) -> usize {
        self.values.iter().filter(|&&v| v < theta).count()
    }

    /// Training error of `sign(g)`; a zero margin counts as an error.
    pub fn training_error(&self) -> f64 {
        let wrong = self.values.iter().filter(|&&v| v <= 0.0).count();
        wrong as f64 / self.values.len() as f64
    }
}
