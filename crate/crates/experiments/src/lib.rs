//! Data generation, configuration and seeded orchestration of the DPVI
//! experiments.

pub mod config;
pub mod data;
pub mod io;
pub mod record;
pub mod runner;
pub mod summary;

pub use config::{Algorithm, ExperimentConfig, ExperimentId, LikelihoodKind, PolicyKind};
pub use record::{RunRecord, RunUnit};
pub use runner::{execute, plan, replay, run_experiment, write_outputs};
pub use summary::{summarize, SummaryRow};
