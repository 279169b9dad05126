//! Named calibration methods and the per-label margins they apply.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::calibration::{
    adaptive_calibration_conditional, adaptive_ci, adaptive_label_conditional, adaptive_marginal,
    clean_frequencies, correction_delta, delta_cc, delta_ci, delta_marginal, empirical_frequencies,
    standard_label_conditional, standard_marginal, CTable, EcdfFamily, NoiseRegion,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::scores::{ScoreMatrix, Thresholds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    StandardLc,
    StandardMarg,
    Adaptive,
    AdaptivePlus,
    AdaptiveCi,
    AdaptiveCiPlus,
    AdaptiveMarg,
    AdaptiveMargPlus,
    AdaptiveCc,
    AdaptiveCcPlus,
}

pub const ALL_METHODS: [Method; 10] = [
    Method::StandardLc,
    Method::StandardMarg,
    Method::Adaptive,
    Method::AdaptivePlus,
    Method::AdaptiveCi,
    Method::AdaptiveCiPlus,
    Method::AdaptiveMarg,
    Method::AdaptiveMargPlus,
    Method::AdaptiveCc,
    Method::AdaptiveCcPlus,
];

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::StandardLc => "standard-lc",
            Method::StandardMarg => "standard-marg",
            Method::Adaptive => "adaptive",
            Method::AdaptivePlus => "adaptive+",
            Method::AdaptiveCi => "adaptive-ci",
            Method::AdaptiveCiPlus => "adaptive-ci+",
            Method::AdaptiveMarg => "adaptive-marg",
            Method::AdaptiveMargPlus => "adaptive-marg+",
            Method::AdaptiveCc => "adaptive-cc",
            Method::AdaptiveCcPlus => "adaptive-cc+",
        }
    }

    pub fn optimistic(&self) -> bool {
        matches!(self, Method::AdaptivePlus | Method::AdaptiveCiPlus | Method::AdaptiveMargPlus | Method::AdaptiveCcPlus)
    }

    pub fn needs_region(&self) -> bool {
        matches!(self, Method::AdaptiveCi | Method::AdaptiveCiPlus)
    }

    pub fn needs_v(&self) -> bool {
        !matches!(self, Method::StandardLc | Method::StandardMarg) && !self.needs_region()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_METHODS
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Noise information available to the adaptive methods.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationInputs<'a> {
    pub v: Option<&'a DMatrix<f64>>,
    pub region: Option<&'a NoiseRegion>,
    /// Noisy label frequencies; the calibration frequencies are used when absent.
    pub rho_tilde: Option<&'a [f64]>,
    pub alpha: f64,
    pub gamma: f64,
    pub ctable: &'a CTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated {
    pub thresholds: Thresholds,
    /// Finite-sample margin used for each label; zero for the standard methods.
    pub delta: Vec<f64>,
}

fn require<'a, T>(x: Option<&'a T>, method: Method, what: &str) -> Result<&'a T>
where
    T: ?Sized,
{
    x.ok_or_else(|| Error::Config(format!("method {method} needs {what}")))
}

pub fn calibrate(method: Method, scores: &ScoreMatrix, y_noisy: &[usize], inputs: &CalibrationInputs) -> Result<Calibrated> {
    let k = scores.k();
    let alpha = inputs.alpha;
    let ctable = inputs.ctable;
    let opt = method.optimistic();
    if method == Method::StandardLc {
        let thresholds = standard_label_conditional(scores, y_noisy, alpha)?;
        return Ok(Calibrated { thresholds, delta: vec![0.0; k] });
    }
    if method == Method::StandardMarg {
        let thresholds = standard_marginal(scores, y_noisy, alpha)?;
        return Ok(Calibrated { thresholds, delta: vec![0.0; k] });
    }
    let ecdf = EcdfFamily::new(scores, y_noisy)?;
    ecdf.require_nonempty()?;
    let n_star = ecdf.n_star();
    match method {
        Method::AdaptiveCi | Method::AdaptiveCiPlus => {
            let region = require(inputs.region, method, "a noise region")?;
            let thresholds = adaptive_ci(scores, y_noisy, region, alpha, ctable, opt)?;
            let delta = (0..k).map(|l| delta_ci(region, l, ecdf.group_size(l), n_star, ctable)).collect();
            Ok(Calibrated { thresholds, delta })
        }
        Method::Adaptive | Method::AdaptivePlus => {
            let v = require(inputs.v, method, "a noise model")?;
            let thresholds = adaptive_label_conditional(scores, y_noisy, v, alpha, ctable, opt)?;
            let delta = (0..k)
                .map(|l| correction_delta(ecdf.group_size(l), n_star, linalg::offdiag_abs_row_sum(v, l), k, ctable))
                .collect();
            Ok(Calibrated { thresholds, delta })
        }
        Method::AdaptiveMarg | Method::AdaptiveMargPlus => {
            let v = require(inputs.v, method, "a noise model")?;
            let empirical;
            let rho_tilde = match inputs.rho_tilde {
                Some(r) => r,
                None => {
                    empirical = empirical_frequencies(y_noisy, k);
                    &empirical
                }
            };
            let thresholds = adaptive_marginal(scores, y_noisy, v, rho_tilde, alpha, ctable, opt)?;
            let rho = clean_frequencies(v, rho_tilde)?;
            let d = delta_marginal(v, &rho, rho_tilde, ecdf.n_total(), n_star, ctable);
            Ok(Calibrated { thresholds, delta: vec![d; k] })
        }
        Method::AdaptiveCc | Method::AdaptiveCcPlus => {
            let v = require(inputs.v, method, "a noise model")?;
            let thresholds = adaptive_calibration_conditional(scores, y_noisy, v, alpha, inputs.gamma, opt)?;
            let delta = (0..k).map(|l| delta_cc(v, l, ecdf.group_size(l), n_star, inputs.gamma)).collect();
            Ok(Calibrated { thresholds, delta })
        }
        Method::StandardLc | Method::StandardMarg => unreachable!("handled above"),
    }
}
