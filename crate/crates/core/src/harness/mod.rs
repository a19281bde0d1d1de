//! Training, evaluation, ablation and verification entry points shared by
//! the command-line tool and the examples.

pub mod ablate;
pub mod checkpoint;
pub mod config;
pub mod gradsuite;
pub mod train;

pub use ablate::{ablate, run_ablation, worker_threads, AblationResult};
pub use checkpoint::{Checkpoint, Settings};
pub use config::{parse_config, Precision, RunArgs, RunConfig};
pub use gradsuite::{run_gradcheck, UnitResult};
pub use train::{evaluate, evaluate_as, predict, run_evaluate, run_train, train, EpochRecord, TrainOutcome};
