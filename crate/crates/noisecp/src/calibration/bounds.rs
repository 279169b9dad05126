//! Coverage bound diagnostics.

use nalgebra::DMatrix;

use super::adaptive::{clean_frequencies, correction_delta, delta_cc, delta_marginal, dkw_factor};
use super::{check_alpha, CTable, NoiseRegion};
use crate::error::{Error, Result};
use crate::linalg;

/// Upper and lower bounds on the density ratio of the score distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityRatio {
    pub f_max: f64,
    pub f_min: f64,
}

impl DensityRatio {
    fn ratio(&self) -> Result<f64> {
        if !(self.f_min > 0.0 && self.f_max >= self.f_min) {
            return Err(Error::MissingDensityBounds);
        }
        Ok(self.f_max / self.f_min)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MarginalInputs<'a> {
    pub n_cal: usize,
    pub rho_tilde: &'a [f64],
}

#[derive(Debug, Clone, Default)]
pub struct BoundOptions<'a> {
    /// Compute the upper-bound slack terms; requires `density`.
    pub slack: bool,
    pub density: Option<DensityRatio>,
    pub gamma: Option<f64>,
    pub region: Option<&'a NoiseRegion>,
    pub marginal: Option<MarginalInputs<'a>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// Clamped to `[0, 1]`.
    pub worst_case_lower: f64,
    /// Clamped to `[0, 1]`.
    pub worst_case_upper: f64,
    /// Unclamped `upper - lower`.
    pub worst_case_gap: f64,
    pub phi: Option<f64>,
    pub phi_ci: Option<f64>,
    pub phi_marg: Option<f64>,
    pub phi_cc: Option<f64>,
}

pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|j| 1.0 / j as f64).sum()
}

/// Bounds for label `k` given the true `V`, with `n_k` calibration points in
/// group `k` and smallest group size `n_star`.
pub fn theoretical_bounds(
    v: &DMatrix<f64>,
    k: usize,
    n_k: usize,
    n_star: usize,
    alpha: f64,
    ctable: &CTable,
    opts: &BoundOptions,
) -> Result<BoundReport> {
    check_alpha(alpha)?;
    let kk = v.nrows();
    if k >= kk {
        return Err(Error::LabelOutOfRange { label: k, k: kk });
    }
    let s = linalg::offdiag_abs_row_sum(v, k);
    let nk = n_k as f64;
    let ns = n_star as f64;
    let lower = 1.0 - alpha - s;
    let upper = 1.0 - alpha + 1.0 / (nk + 1.0) + s;
    let mut report = BoundReport {
        worst_case_lower: lower.clamp(0.0, 1.0),
        worst_case_upper: upper.clamp(0.0, 1.0),
        worst_case_gap: 1.0 / (nk + 1.0) + 2.0 * s,
        phi: None,
        phi_ci: None,
        phi_marg: None,
        phi_cc: None,
    };
    if !opts.slack {
        return Ok(report);
    }
    let ratio = opts.density.ok_or(Error::MissingDensityBounds)?.ratio()?;
    let h = harmonic(n_k + 1);

    let delta = correction_delta(n_k, n_star, s, kk, ctable);
    report.phi = Some(
        2.0 * delta + 1.0 / ns + (1.0 + 2.0 * s * ratio * h) / nk + (v[(k, k)] + s) / (nk + 1.0),
    );

    if let Some(region) = opts.region {
        let mut bar = 0.0;
        let mut band = 0.0;
        for l in (0..kk).filter(|&l| l != k) {
            bar += region.v_bar()[(k, l)].abs();
            band += region.v_upp()[(k, l)].abs() + region.width(k, l);
        }
        report.phi_ci = Some(
            1.0 / ns
                + (1.0 + 4.0 * bar) * region.alpha_v()
                + 2.0 * ctable.get(n_k)
                + (kk - 1) as f64 * (2.0 * region.max_width(k) + region.zeta_upp(k).abs())
                + 4.0 * band / ns.sqrt() * dkw_factor(kk as f64, n_star)
                + 2.0 / nk * (1.0 + s + s * ratio * h),
        );
    }

    if let Some(m) = opts.marginal {
        let rho = clean_frequencies(v, m.rho_tilde)?;
        let rt = m.rho_tilde;
        let nc = m.n_cal as f64;
        let dm = delta_marginal(v, &rho, rt, m.n_cal, n_star, ctable);
        let max_over = |f: &dyn Fn(usize) -> f64| (0..kk).map(f).fold(f64::MIN, f64::max);
        let all = max_over(&|j| rho[j] / rt[j] * linalg::abs_row_sum(v, j));
        let diag = max_over(&|j| (rho[j] * v[(j, j)] - rt[j]) / rt[j]);
        let off = max_over(&|j| rho[j] / rt[j] * (0..kk).filter(|&l| l != j).map(|l| v[(j, l)]).sum::<f64>());
        report.phi_marg = Some(
            2.0 * dm + 1.0 / nc + 1.0 / ns + all / nc + harmonic(m.n_cal + 1) / nc * (diag + ratio * off),
        );
    }

    if let Some(gamma) = opts.gamma {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::GammaOutOfRange(gamma));
        }
        let vbar = 0.5 * (1.0 - 0.5 * s / linalg::abs_row_sum(v, k));
        let g = gamma * vbar;
        report.phi_cc = Some(
            delta_cc(v, k, n_k, n_star, gamma)
                + (1.0 + (v[(k, k)] + s) / g) / nk
                + ((3.0 / g).ln() / (2.0 * nk)).sqrt()
                + 2.0 * s * (((2.0 * kk as f64).ln() + (3.0 / g).ln()) / (2.0 * ns)).sqrt()
                + 2.0 * s * ratio / nk * ((nk + 1.0).ln() + 3.0 / g * h),
        );
    }
    Ok(report)
}

/// Worst-case lower bounds for standard calibration under randomized response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrComparison {
    /// `1 - alpha - xi (1 - 1/K)` from the `V`-based analysis.
    pub ours: f64,
    /// `1 - alpha - eps (1 - 1/K)` from the Huber contamination view.
    pub huber_additive: f64,
    /// `1 - alpha / (1 - eps (1 - 1/K))`.
    pub huber_multiplicative: f64,
}

pub fn rr_worst_case_comparison(epsilon: f64, k: usize, alpha: f64) -> RrComparison {
    let flip = 1.0 - 1.0 / k as f64;
    RrComparison {
        ours: 1.0 - alpha - epsilon / (1.0 - epsilon) * flip,
        huber_additive: 1.0 - alpha - epsilon * flip,
        huber_multiplicative: 1.0 - alpha / (1.0 - epsilon * flip),
    }
}
