//! The query protocol between a learner and the scanning weak learner
//! `W(M)`, and the extension `B_A` that halts on a failed response.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::bits::PackedRow;
use super::instance::HardInstance;
use crate::error::{param, Error, Result};

/// Slack on the inclusive boundary `loss ≤ ½ − γ`.
pub const SCAN_TOLERANCE: f64 = 1e-12;

/// `(S_j, c(S_j), D_j)`: a multiset of sample points, their labels, and a
/// distribution over the listed positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    pub indices: Vec<usize>,
    pub labels: Vec<i8>,
    pub weights: Vec<f64>,
}

impl Query {
    pub fn new(indices: Vec<usize>, labels: Vec<i8>, weights: Vec<f64>) -> Result<Self> {
        if indices.is_empty() || indices.len() != labels.len() || indices.len() != weights.len() {
            return Err(param("query indices, labels and weights must be non-empty and equally long"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(param("query weights must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(param(format!("query weights sum to {sum}")));
        }
        if labels.iter().any(|&y| y != 1 && y != -1) {
            return Err(param("query labels must be ±1"));
        }
        Ok(Self {
            indices,
            labels,
            weights,
        })
    }

    /// Uniform weights over the listed positions.
    pub fn uniform(indices: Vec<usize>, labels: Vec<i8>) -> Result<Self> {
        let w = 1.0 / indices.len().max(1) as f64;
        let n = indices.len();
        Self::new(indices, labels, vec![w; n])
    }
}

/// A query folded onto distinct points, ready for repeated row scans.
#[derive(Clone, Debug)]
pub struct PreparedQuery {
    /// Labels on the support as a packed row (other bits unused).
    labels: PackedRow,
    kind: QueryKind,
}

#[derive(Clone, Debug)]
enum QueryKind {
    /// Equal mass on every point of `mask`.
    Uniform { mask: PackedRow, count: usize },
    Weighted { points: Vec<(usize, f64)> },
}

impl PreparedQuery {
    /// Folds `query` onto `[domain]`. Conflicting labels for the same point
    /// are a protocol violation.
    pub fn new(query: &Query, domain: usize) -> Result<Self> {
        let mut mass: BTreeMap<usize, (f64, i8)> = BTreeMap::new();
        for ((&i, &y), &w) in query.indices.iter().zip(&query.labels).zip(&query.weights) {
            if i >= domain {
                return Err(Error::Protocol(format!("index {i} outside the domain [{domain}]")));
            }
            let e = mass.entry(i).or_insert((0.0, y));
            if e.1 != y {
                return Err(Error::Protocol(format!("conflicting labels for point {i}")));
            }
            e.0 += w;
        }
        mass.retain(|_, (w, _)| *w > 0.0);
        let mut labels = PackedRow::zeros(domain);
        for (&i, &(_, y)) in &mass {
            labels.set(i, y);
        }
        let first = mass.values().next().map(|v| v.0).unwrap_or(0.0);
        let uniform = mass.values().all(|v| v.0 == first);
        let kind = if uniform {
            let mut mask = PackedRow::zeros(domain);
            for &i in mass.keys() {
                mask.set(i, 1);
            }
            QueryKind::Uniform {
                mask,
                count: mass.len(),
            }
        } else {
            QueryKind::Weighted {
                points: mass.into_iter().map(|(i, (w, _))| (i, w)).collect(),
            }
        };
        Ok(Self { labels, kind })
    }

    /// Support of the folded distribution.
    pub fn support(&self) -> Vec<usize> {
        match &self.kind {
            QueryKind::Uniform { mask, .. } => (0..mask.len()).filter(|&i| mask.get(i) > 0).collect(),
            QueryKind::Weighted { points } => points.iter().map(|p| p.0).collect(),
        }
    }

    pub fn label(&self, i: usize) -> i8 {
        self.labels.get(i)
    }

    /// `Σ_j D(j) 1{row(S_j) ≠ c(S_j)}`.
    pub fn loss(&self, row: &PackedRow) -> f64 {
        match &self.kind {
            QueryKind::Uniform { mask, count } => {
                row.disagreements_within(&self.labels, mask) as f64 / *count as f64
            }
            QueryKind::Weighted { points } => points
                .iter()
                .filter(|(i, _)| row.get(*i) != self.labels.get(*i))
                .map(|(_, w)| w)
                .sum(),
        }
    }
}

/// Runs `W(M)`: the first row with loss `≤ ½ − γ`, else row 0. Returns the
/// row index and its loss.
pub fn scan_weak_learner(rows: &[PackedRow], query: &PreparedQuery, gamma: f64) -> (usize, f64) {
    let threshold = 0.5 - gamma + SCAN_TOLERANCE;
    for (i, row) in rows.iter().enumerate() {
        let loss = query.loss(row);
        if loss <= threshold {
            return (i, loss);
        }
    }
    (0, query.loss(&rows[0]))
}

/// Which matrix the weak learner scans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// `W(H)`.
    Hypotheses,
    /// `W(H ∪ c)`: the concept is appended as the last row.
    WithConcept,
}

#[derive(Clone, Debug)]
pub struct Response {
    /// Row index in the scanned matrix.
    pub row: usize,
    pub values: Arc<PackedRow>,
    /// Loss under the query's own distribution.
    pub loss: f64,
}

/// A learner speaking the query protocol. It is constructed from `(S, c(S))`
/// only and sees nothing else but responses.
pub trait ProtocolLearner {
    /// Queries for round `round` (0-based), given the previous round's
    /// responses. Returning no queries ends querying early.
    fn queries(&mut self, round: usize, previous: &[Response]) -> Result<Vec<Query>>;

    /// Final hypothesis on `[2m]`, given the last round's responses.
    fn output(&mut self, last: &[Response]) -> Result<PackedRow>;
}

#[derive(Clone, Debug)]
pub struct ProtocolOutcome {
    pub hypothesis: PackedRow,
    /// `B_A` stopped on a failed response and returned all `+1`.
    pub halted: bool,
    /// `(round, query)` of the first failed response.
    pub halted_at: Option<(usize, usize)>,
    pub rounds: usize,
    pub queries: usize,
    /// Responses that were the appended concept row.
    pub concept_responses: usize,
}

/// Drives `learner` for up to `p` rounds of at most `t` queries.
///
/// With `extension`, any response with loss above `½ − γ` under its
/// query's distribution halts the run with the all-`+1` hypothesis.
#[allow(clippy::too_many_arguments)]
pub fn run_protocol(
    learner: &mut dyn ProtocolLearner,
    instance: &HardInstance,
    sample: &[usize],
    oracle: OracleMode,
    extension: bool,
    p: usize,
    t: usize,
) -> Result<ProtocolOutcome> {
    if oracle == OracleMode::WithConcept && !instance.params.append_concept {
        return Err(param("W(H ∪ c) requires an instance generated with the concept row"));
    }
    let rows = match oracle {
        OracleMode::WithConcept => instance.rows(),
        OracleMode::Hypotheses => instance.hypothesis_rows(),
    };
    let concept_row = match oracle {
        OracleMode::WithConcept => Some(rows.len() - 1),
        OracleMode::Hypotheses => None,
    };
    let in_sample: std::collections::HashSet<usize> = sample.iter().copied().collect();
    let gamma = instance.params.gamma;
    let domain = instance.domain();
    let mut previous: Vec<Response> = Vec::new();
    let mut outcome = ProtocolOutcome {
        hypothesis: PackedRow::ones(domain),
        halted: false,
        halted_at: None,
        rounds: 0,
        queries: 0,
        concept_responses: 0,
    };
    for round in 0..p {
        let queries = learner.queries(round, &previous)?;
        if queries.is_empty() {
            break;
        }
        if queries.len() > t {
            return Err(Error::Protocol(format!(
                "round {round}: {} queries exceed t = {t}",
                queries.len()
            )));
        }
        outcome.rounds += 1;
        let mut responses = Vec::with_capacity(queries.len());
        for (j, q) in queries.iter().enumerate() {
            for (&i, &y) in q.indices.iter().zip(&q.labels) {
                if !in_sample.contains(&i) {
                    return Err(Error::Protocol(format!("query point {i} is not in the training sample")));
                }
                if instance.concept().get(i) != y {
                    return Err(Error::Protocol(format!("query label for point {i} is inconsistent")));
                }
            }
            let prepared = PreparedQuery::new(q, domain)?;
            let (row, loss) = scan_weak_learner(rows, &prepared, gamma);
            outcome.queries += 1;
            if Some(row) == concept_row {
                outcome.concept_responses += 1;
            }
            if extension && loss > 0.5 - gamma + SCAN_TOLERANCE && outcome.halted_at.is_none() {
                outcome.halted_at = Some((round, j));
            }
            responses.push(Response {
                row,
                values: Arc::new(rows[row].clone()),
                loss,
            });
        }
        if outcome.halted_at.is_some() {
            outcome.halted = true;
            return Ok(outcome);
        }
        previous = responses;
    }
    outcome.hypothesis = learner.output(&previous)?;
    if outcome.hypothesis.len() != domain {
        return Err(Error::Protocol("learner output has the wrong length".into()));
    }
    Ok(outcome)
}

/// [`run_protocol`] as the extension `B_A` over `W(H)`.
pub fn run_extension(
    learner: &mut dyn ProtocolLearner,
    instance: &HardInstance,
    sample: &[usize],
    p: usize,
    t: usize,
) -> Result<ProtocolOutcome> {
    run_protocol(learner, instance, sample, OracleMode::Hypotheses, true, p, t)
}
