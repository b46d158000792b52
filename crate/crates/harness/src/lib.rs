//! Configuration, training orchestration, sweeps and plotting for the
//! `manip-rl` learners.
pub mod config;
pub mod plot;
pub mod sweep;
pub mod train;

pub use config::{Algorithm, Architecture, EnvId, RunConfig, OUT_DIR_ENV};
pub use train::{run_seed, run_training, Checkpoint, RunOutcome, SummaryRow};
