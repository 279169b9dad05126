//! Threshold selection.
//!
//! Standard split-conformal calibration treats the noisy calibration labels as
//! if they were clean. The adaptive methods correct each label's empirical
//! level by a plug-in estimate of the coverage inflation induced by the
//! contamination model, plus a finite-sample margin.

mod adaptive;
mod bounds;
mod ctable;
mod ecdf;
mod region;
mod standard;

pub use adaptive::{
    adaptive_calibration_conditional, adaptive_ci, adaptive_label_conditional, adaptive_marginal,
    ci_inflation, clean_frequencies, correction_delta, delta_cc, delta_ci, delta_from_c,
    delta_marginal, dkw_factor, empirical_frequencies, empirical_inflation, gamma_split,
    marginal_inflation, select_threshold,
};
pub use bounds::{
    harmonic, rr_worst_case_comparison, theoretical_bounds, BoundOptions, BoundReport,
    DensityRatio, MarginalInputs, RrComparison,
};
pub use ctable::{monte_carlo_c, CTable, DEFAULT_REPS, DEFAULT_SEED};
pub use ecdf::EcdfFamily;
pub use region::NoiseRegion;
pub use standard::{conformal_rank, standard_label_conditional, standard_marginal};

use crate::error::{Error, Result};

/// Absorbs rounding when comparing a rank with a real-valued cutoff.
pub(crate) const RANK_EPS: f64 = 1e-9;

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    Ok(())
}
