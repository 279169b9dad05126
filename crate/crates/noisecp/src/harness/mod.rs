//! Experiment configuration, score ingestion, calibration dispatch and
//! reporting.

pub mod config;
pub mod experiment;
pub mod io;
pub mod methods;
pub mod report;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, run_repetition, Setup};
pub use methods::{calibrate, Calibrated, CalibrationInputs, Method, ALL_METHODS};
pub use report::{evaluate, metrics_csv, CoverageReport};
