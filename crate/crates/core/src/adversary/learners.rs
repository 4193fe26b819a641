//! Learners tested against the hard instance.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use super::bits::PackedRow;
use super::protocol::{ProtocolLearner, Query, Response, SCAN_TOLERANCE};
use crate::error::{param, Error, Result};
use crate::rng::StreamRng;
use crate::types::learning_rate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    /// No queries; predicts `+1` everywhere.
    AllOnes,
    /// No queries; copies the sample labels and guesses elsewhere.
    RandomGuess,
    /// Bagged AdaBoost over the oracle's responses.
    NaiveBoosting,
    /// Majority of the biased rows; reads the matrix directly.
    MajorityDecoder,
    /// Outputs the concept; a calibration check that loss can reach 0.
    Concept,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 5] = [
        LearnerKind::AllOnes,
        LearnerKind::RandomGuess,
        LearnerKind::NaiveBoosting,
        LearnerKind::MajorityDecoder,
        LearnerKind::Concept,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::AllOnes => "all-ones",
            LearnerKind::RandomGuess => "random-guess",
            LearnerKind::NaiveBoosting => "naive-boosting",
            LearnerKind::MajorityDecoder => "majority-decoder",
            LearnerKind::Concept => "concept",
        }
    }

    /// Whether the learner only uses `(S, c(S))` and oracle responses.
    pub fn uses_protocol(self) -> bool {
        matches!(
            self,
            LearnerKind::AllOnes | LearnerKind::RandomGuess | LearnerKind::NaiveBoosting
        )
    }

    /// Whether the learner's output is a function of `(S, c(S), H)`, so the
    /// maximum-likelihood floor applies to it.
    pub fn is_fair(self) -> bool {
        self != LearnerKind::Concept
    }

    /// Builds a protocol client from the labeled sample.
    pub fn build(
        self,
        domain: usize,
        sample: &[usize],
        labels: &[i8],
        gamma: f64,
        t: usize,
        rng: StreamRng,
    ) -> Result<Box<dyn ProtocolLearner>> {
        Ok(match self {
            LearnerKind::AllOnes => Box::new(AllOnes { domain }),
            LearnerKind::RandomGuess => Box::new(RandomGuess {
                domain,
                sample: sample.to_vec(),
                labels: labels.to_vec(),
                rng,
            }),
            LearnerKind::NaiveBoosting => Box::new(NaiveBoosting::new(domain, sample, labels, gamma, t, rng)?),
            other => {
                return Err(param(format!("{} does not speak the query protocol", other.name())))
            }
        })
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LearnerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| param(format!("unknown learner {s:?}")))
    }
}

pub struct AllOnes {
    domain: usize,
}

impl ProtocolLearner for AllOnes {
    fn queries(&mut self, _round: usize, _previous: &[Response]) -> Result<Vec<Query>> {
        Ok(Vec::new())
    }

    fn output(&mut self, _last: &[Response]) -> Result<PackedRow> {
        Ok(PackedRow::ones(self.domain))
    }
}

pub struct RandomGuess {
    domain: usize,
    sample: Vec<usize>,
    labels: Vec<i8>,
    rng: StreamRng,
}

impl ProtocolLearner for RandomGuess {
    fn queries(&mut self, _round: usize, _previous: &[Response]) -> Result<Vec<Query>> {
        Ok(Vec::new())
    }

    fn output(&mut self, _last: &[Response]) -> Result<PackedRow> {
        let mut h = PackedRow::uniform(self.domain, &mut self.rng);
        for (&i, &y) in self.sample.iter().zip(&self.labels) {
            h.set(i, y);
        }
        Ok(h)
    }
}

/// Each round: integrate the previous responses with AdaBoost steps at the
/// fixed rate `α(γ)`, then query the current distribution once and `t − 1`
/// bootstrap resamples of it. Outputs the sign of the weighted vote.
pub struct NaiveBoosting {
    domain: usize,
    points: Vec<usize>,
    labels: Vec<i8>,
    weights: Vec<f64>,
    gamma: f64,
    alpha: f64,
    t: usize,
    votes: Vec<(f64, Arc<PackedRow>)>,
    rng: StreamRng,
}

impl NaiveBoosting {
    pub fn new(domain: usize, sample: &[usize], labels: &[i8], gamma: f64, t: usize, rng: StreamRng) -> Result<Self> {
        let mut pairs: Vec<(usize, i8)> = sample.iter().copied().zip(labels.iter().copied()).collect();
        pairs.sort_unstable();
        pairs.dedup();
        if pairs.is_empty() {
            return Err(param("naive boosting needs a non-empty sample"));
        }
        let n = pairs.len();
        Ok(Self {
            domain,
            points: pairs.iter().map(|p| p.0).collect(),
            labels: pairs.iter().map(|p| p.1).collect(),
            weights: vec![1.0 / n as f64; n],
            gamma,
            alpha: learning_rate(gamma)?,
            t,
            votes: Vec::new(),
            rng,
        })
    }

    fn absorb(&mut self, responses: &[Response]) {
        for r in responses {
            let loss: f64 = self
                .points
                .iter()
                .zip(&self.labels)
                .zip(&self.weights)
                .filter(|((&i, &y), _)| r.values.get(i) != y)
                .map(|(_, w)| w)
                .sum();
            if loss > 0.5 - self.gamma / 2.0 + SCAN_TOLERANCE {
                continue;
            }
            for ((w, &i), &y) in self.weights.iter_mut().zip(&self.points).zip(&self.labels) {
                *w *= (-self.alpha * f64::from(y * r.values.get(i))).exp();
            }
            let z: f64 = self.weights.iter().sum();
            for w in &mut self.weights {
                *w /= z;
            }
            self.votes.push((self.alpha, Arc::clone(&r.values)));
        }
    }
}

impl ProtocolLearner for NaiveBoosting {
    fn queries(&mut self, _round: usize, previous: &[Response]) -> Result<Vec<Query>> {
        self.absorb(previous);
        let mut out = Vec::with_capacity(self.t);
        out.push(Query::new(self.points.clone(), self.labels.clone(), self.weights.clone())?);
        let index = WeightedIndex::new(&self.weights).map_err(|e| Error::Internal(e.to_string()))?;
        for _ in 1..self.t {
            let drawn: Vec<usize> = (0..self.points.len()).map(|_| index.sample(&mut self.rng)).collect();
            out.push(Query::uniform(
                drawn.iter().map(|&k| self.points[k]).collect(),
                drawn.iter().map(|&k| self.labels[k]).collect(),
            )?);
        }
        Ok(out)
    }

    fn output(&mut self, last: &[Response]) -> Result<PackedRow> {
        self.absorb(last);
        let mut h = PackedRow::ones(self.domain);
        for i in 0..self.domain {
            let score: f64 = self.votes.iter().map(|(a, v)| a * f64::from(v.get(i))).sum();
            if score < 0.0 {
                h.set(i, -1);
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn names_roundtrip() {
        for k in LearnerKind::ALL {
            assert_eq!(k.name().parse::<LearnerKind>().unwrap(), k);
        }
        assert!("oracle".parse::<LearnerKind>().is_err());
    }

    #[test]
    fn calibration_modes_do_not_build() {
        for k in [LearnerKind::MajorityDecoder, LearnerKind::Concept] {
            assert!(k.build(4, &[0], &[1], 0.1, 1, rng::stream(0, &[])).is_err());
        }
    }

    #[test]
    fn naive_boosting_queries() {
        let mut l = NaiveBoosting::new(10, &[1, 3, 3, 5], &[1, -1, -1, 1], 0.1, 3, rng::stream(1, &[])).unwrap();
        let qs = l.queries(0, &[]).unwrap();
        assert_eq!(qs.len(), 3);
        assert_eq!(qs[0].indices, vec![1, 3, 5]);
        for q in &qs[1..] {
            assert!(q.indices.iter().all(|i| [1, 3, 5].contains(i)));
        }
        let perfect = Arc::new(PackedRow::from_signs(&[1, 1, 1, -1, 1, 1, 1, 1, 1, 1]));
        let out = l
            .output(&[Response {
                row: 0,
                values: perfect.clone(),
                loss: 0.0,
            }])
            .unwrap();
        assert_eq!(out, *perfect);
    }
}
