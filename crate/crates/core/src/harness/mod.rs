//! Configuration, artificial data, experiment orchestration and reports.

pub mod config;
pub mod data;
pub mod experiment;
pub mod plots;

pub use config::{ConfigError, ExperimentConfig};
pub use data::{generate_artificial_data, uniform_positions};
pub use experiment::{
    convergence_study, run_experiment, run_identification, validate_gradient, ConvergenceReport, ExperimentReport,
    GradientCheckReport, HarnessError,
};
