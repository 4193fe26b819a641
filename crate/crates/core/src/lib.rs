//! Parallel boosting with a fixed number of adaptive rounds, round-level KL
//! diagnostics, and a simulator for the matching lower-bound instance.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod approx;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod harness;
pub mod rng;
pub mod types;
pub mod weak;

pub use engine::{run, BoostOutcome, BoostTrace, EngineConfig, SelectionRule, SnapshotMode, Subsample};
pub use error::{Error, Result};
pub use types::{Hypothesis, LabeledSample, LinearClassifier, WeightDistribution};
pub use weak::{WeakLearner, WeakLearnerKind, WeakLearnerSpec};
