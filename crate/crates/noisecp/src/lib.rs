//! Conformal classification with calibration that adapts to random label
//! contamination.
//!
//! The crate is organised bottom-up:
//!
//! - [`contamination`]: transition and mixture matrices, their inverse, label corruption.
//! - [`scores`]: conformity scores and prediction sets.
//! - [`calibration`]: standard and contamination-adaptive threshold selection.
//! - [`estimation`]: fitting the contamination model from clean and noisy samples.
//! - [`synth`]: synthetic generators and simple probability models.
//! - [`harness`]: seeded experiments, file ingestion and metrics.

pub mod calibration;
pub mod contamination;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod scores;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
