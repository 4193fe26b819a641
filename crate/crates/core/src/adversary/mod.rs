//! The lower-bound hard instance and the machinery to measure learners
//! against it.

pub mod bits;
pub mod decoder;
pub mod instance;
pub mod learners;
pub mod measure;
pub mod protocol;

pub use bits::PackedRow;
pub use decoder::{coin_oracle, expected_majority_loss, majority_decoder, majority_vote, miss_probability, uniform_loss};
pub use instance::{draw_training_sample, Constants, HardInstance, InstanceParams, Layout};
pub use learners::LearnerKind;
pub use measure::{
    adversary_grid, analytic_floor, calibrate_c_l, measure_expected_loss, run_trial, AdversaryParams, GridPoint,
    GridReport, GridSpec, LossEstimate,
};
pub use protocol::{run_extension, run_protocol, scan_weak_learner, OracleMode, PreparedQuery, ProtocolLearner, Query, Response};
