//! Configuration, experiment runs, records and grids.

pub mod baseline;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod grid;
pub mod records;
pub mod verify;

pub use baseline::{adaboost_reference, compare_with_adaboost, BaselineReport};
pub use config::{DatasetConfig, ExperimentConfig, Mode, Overrides};
pub use dataset::{load_csv, Dataset};
pub use experiment::{run_experiment, RunOutput};
pub use grid::tradeoff_grid;
pub use records::{RunRecord, Verdict};
pub use verify::run_suite;
