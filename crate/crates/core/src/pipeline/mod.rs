//! Offline and online orchestration: sampling, snapshot generation,
//! training, evaluation and two-scale runs.

pub mod config;
pub mod dataset;
pub mod evaluate;
pub mod rba;
pub mod sampling;
pub mod train;
pub mod twoscale;
pub mod verify;

pub use config::{RunConfig, Sampler, TwoScaleConfig};
pub use dataset::{generate_snapshots, generate_test_set, sample_parameters, sample_test_parameters, validate, Dataset, Split};
pub use evaluate::{evaluate, EvaluationReport};
pub use train::{train, train_to_dir};
pub use twoscale::{run_twoscale, Mode, TwoScaleReport};
pub use verify::{verify_model, VerifyReport};
