//! Experiment runner for todsim: batch self-play runs, report tables and the
//! annotation service.

pub mod annotation;
pub mod config;
pub mod experiment;
pub mod report;
pub mod validate;

pub use config::ExperimentConfig;
pub use experiment::run_experiment;
