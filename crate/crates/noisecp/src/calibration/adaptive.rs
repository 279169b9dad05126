use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::standard::pooled_scores;
use super::{check_alpha, CTable, EcdfFamily, NoiseRegion, RANK_EPS};
use crate::error::{Error, Result};
use crate::linalg;
use crate::scores::{ScoreMatrix, Thresholds};

/// Scans the order statistics and returns the first `t_i` (1-based `i`) with
/// `i / n >= 1 - alpha - m_i`, where `m_i = inflation(t_i) - delta`, raised to
/// `floor` when one is given. Returns 1 when no index qualifies.
pub fn select_threshold(
    order: &[f64],
    alpha: f64,
    delta: f64,
    floor: Option<f64>,
    inflation: impl Fn(f64) -> f64,
) -> f64 {
    let n = order.len() as f64;
    for (i, &t) in order.iter().enumerate() {
        let mut m = inflation(t) - delta;
        if let Some(f) = floor {
            m = m.max(f);
        }
        if (i + 1) as f64 >= n * (1.0 - alpha - m) - RANK_EPS {
            return t;
        }
    }
    1.0
}

/// `(V_kk - 1) F_k^k(t) + sum_{l != k} V_kl F_l^k(t)`.
pub fn empirical_inflation(ecdf: &EcdfFamily, v: &DMatrix<f64>, k: usize, t: f64) -> f64 {
    let mut d = (v[(k, k)] - 1.0) * ecdf.cdf(k, k, t);
    for l in (0..ecdf.k()).filter(|&l| l != k) {
        d += v[(k, l)] * ecdf.cdf(l, k, t);
    }
    d
}

/// `min{ m sqrt(pi/2), 1/sqrt(n*) + sqrt((log(2m) + log n*) / 2) }`; `m` is
/// the number of labels (label-conditional) or its square (marginal).
pub fn dkw_factor(m: f64, n_star: usize) -> f64 {
    let ns = n_star as f64;
    (m * (PI / 2.0).sqrt()).min(1.0 / ns.sqrt() + (((2.0 * m).ln() + ns.ln()) / 2.0).sqrt())
}

/// `c + (2 S / sqrt(n*)) dkw_factor(K, n*)` with `S = sum_{l != k} |V_kl|`.
pub fn delta_from_c(c: f64, n_star: usize, offdiag_abs_sum: f64, k: usize) -> f64 {
    c + 2.0 * offdiag_abs_sum / (n_star as f64).sqrt() * dkw_factor(k as f64, n_star)
}

pub fn correction_delta(n_k: usize, n_star: usize, offdiag_abs_sum: f64, k: usize, ctable: &CTable) -> f64 {
    delta_from_c(ctable.get(n_k), n_star, offdiag_abs_sum, k)
}

fn check_square(v: &DMatrix<f64>, k: usize) -> Result<()> {
    if v.nrows() != k || v.ncols() != k {
        return Err(Error::DimensionMismatch { expected: k, got: v.nrows() });
    }
    Ok(())
}

/// Known-`V` adaptive thresholds. The optimistic variant floors the estimated
/// inflation margin at `-(1 - alpha) / n_k`.
pub fn adaptive_label_conditional(
    scores: &ScoreMatrix,
    y_noisy: &[usize],
    v: &DMatrix<f64>,
    alpha: f64,
    ctable: &CTable,
    optimistic: bool,
) -> Result<Thresholds> {
    check_alpha(alpha)?;
    check_square(v, scores.k())?;
    let ecdf = EcdfFamily::new(scores, y_noisy)?;
    ecdf.require_nonempty()?;
    let n_star = ecdf.n_star();
    let tau = (0..scores.k())
        .map(|k| {
            let n_k = ecdf.group_size(k);
            let delta = correction_delta(n_k, n_star, linalg::offdiag_abs_row_sum(v, k), scores.k(), ctable);
            let floor = optimistic.then(|| -(1.0 - alpha) / n_k as f64);
            select_threshold(ecdf.order_statistics(k), alpha, delta, floor, |t| {
                empirical_inflation(&ecdf, v, k, t)
            })
        })
        .collect();
    Thresholds::label_conditional(tau)
}

/// Conservative inflation estimate for row `k` under a noise region.
pub fn ci_inflation(ecdf: &EcdfFamily, region: &NoiseRegion, k: usize, t: f64) -> f64 {
    let kk = ecdf.k();
    let fk = ecdf.cdf(k, k, t);
    let mut linear = 0.0;
    let mut spread = 0.0;
    let mut others = 0.0;
    for l in (0..kk).filter(|&l| l != k) {
        let fl = ecdf.cdf(l, k, t);
        linear += region.v_upp()[(k, l)] * (fl - fk);
        spread += (fl - fk).abs();
        others += fl;
    }
    let mean = others / (kk - 1) as f64;
    linear - region.max_width(k) * (kk - 1) as f64 * (fk - mean).abs() - region.zeta_upp(k).abs() * spread
}

/// Finite-sample margin for row `k` under a noise region.
pub fn delta_ci(region: &NoiseRegion, k: usize, n_k: usize, n_star: usize, ctable: &CTable) -> f64 {
    let kk = region.k();
    let mut s = 0.0;
    let mut bar = 0.0;
    for l in (0..kk).filter(|&l| l != k) {
        s += region.v_upp()[(k, l)].abs() + region.width(k, l);
        bar += region.v_bar()[(k, l)].abs();
    }
    correction_delta(n_k, n_star, s, kk, ctable) + 2.0 * region.alpha_v() * bar
}

/// Adaptive thresholds when `V` is only known to lie in `region`.
pub fn adaptive_ci(
    scores: &ScoreMatrix,
    y_noisy: &[usize],
    region: &NoiseRegion,
    alpha: f64,
    ctable: &CTable,
    optimistic: bool,
) -> Result<Thresholds> {
    check_alpha(alpha)?;
    if region.k() != scores.k() {
        return Err(Error::RegionInvariantViolation(format!(
            "region has {} labels, scores have {}",
            region.k(),
            scores.k()
        )));
    }
    let ecdf = EcdfFamily::new(scores, y_noisy)?;
    ecdf.require_nonempty()?;
    let n_star = ecdf.n_star();
    let tau = (0..scores.k())
        .map(|k| {
            let n_k = ecdf.group_size(k);
            let delta = delta_ci(region, k, n_k, n_star, ctable);
            let floor = optimistic.then(|| -(1.0 - alpha) / n_k as f64);
            select_threshold(ecdf.order_statistics(k), alpha, delta, floor, |t| {
                ci_inflation(&ecdf, region, k, t)
            })
        })
        .collect();
    Thresholds::label_conditional(tau)
}

/// Label frequencies in `y`.
pub fn empirical_frequencies(y: &[usize], k: usize) -> Vec<f64> {
    let mut f = vec![0.0; k];
    for &l in y {
        f[l] += 1.0;
    }
    let n = y.len().max(1) as f64;
    f.iter_mut().for_each(|x| *x /= n);
    f
}

/// `rho_k = sum_l M_lk rho_tilde_l` with `M = V^{-1}`.
pub fn clean_frequencies(v: &DMatrix<f64>, rho_tilde: &[f64]) -> Result<Vec<f64>> {
    let m = linalg::invert(v)?;
    let k = rho_tilde.len();
    Ok((0..k).map(|a| (0..k).map(|l| m[(l, a)] * rho_tilde[l]).sum()).collect())
}

/// `sum_k [(rho_k V_kk - rho_tilde_k) F_k^k(t) + rho_k sum_{l != k} V_kl F_l^k(t)]`.
pub fn marginal_inflation(ecdf: &EcdfFamily, v: &DMatrix<f64>, rho: &[f64], rho_tilde: &[f64], t: f64) -> f64 {
    let kk = ecdf.k();
    let mut d = 0.0;
    for k in 0..kk {
        d += (rho[k] * v[(k, k)] - rho_tilde[k]) * ecdf.cdf(k, k, t);
        let mut off = 0.0;
        for l in (0..kk).filter(|&l| l != k) {
            off += v[(k, l)] * ecdf.cdf(l, k, t);
        }
        d += rho[k] * off;
    }
    d
}

/// Finite-sample margin for the marginal method.
pub fn delta_marginal(
    v: &DMatrix<f64>,
    rho: &[f64],
    rho_tilde: &[f64],
    n_cal: usize,
    n_star: usize,
    ctable: &CTable,
) -> f64 {
    let kk = v.nrows();
    let row_max = (0..kk).map(|k| linalg::offdiag_abs_row_sum(v, k)).fold(0.0, f64::max);
    let shift: f64 = rho.iter().zip(rho_tilde).map(|(a, b)| (a - b).abs()).sum();
    let m = (kk * kk) as f64;
    ctable.get(n_cal) + (2.0 * row_max + shift) / (n_star as f64).sqrt() * dkw_factor(m, n_star)
}

/// One threshold for all labels targeting marginal coverage.
pub fn adaptive_marginal(
    scores: &ScoreMatrix,
    y_noisy: &[usize],
    v: &DMatrix<f64>,
    rho_tilde: &[f64],
    alpha: f64,
    ctable: &CTable,
    optimistic: bool,
) -> Result<Thresholds> {
    check_alpha(alpha)?;
    let kk = scores.k();
    check_square(v, kk)?;
    if rho_tilde.len() != kk {
        return Err(Error::DimensionMismatch { expected: kk, got: rho_tilde.len() });
    }
    if let Some(index) = rho_tilde.iter().position(|r| !(*r > 0.0)) {
        return Err(Error::NonPositiveFrequency { index, value: rho_tilde[index] });
    }
    let pooled = pooled_scores(scores, y_noisy)?;
    let ecdf = EcdfFamily::new(scores, y_noisy)?;
    ecdf.require_nonempty()?;
    let rho = clean_frequencies(v, rho_tilde)?;
    let n_cal = pooled.len();
    let delta = delta_marginal(v, &rho, rho_tilde, n_cal, ecdf.n_star(), ctable);
    let floor = optimistic.then(|| -(1.0 - alpha) / n_cal as f64);
    let tau = select_threshold(&pooled, alpha, delta, floor, |t| {
        marginal_inflation(&ecdf, v, &rho, rho_tilde, t)
    });
    Thresholds::marginal(tau, kk)
}

/// Splits `gamma` into `(gamma_1, gamma_2)` for row `k`, weighting by the
/// share of off-diagonal mass in `sum_l |V_kl|`.
pub fn gamma_split(v: &DMatrix<f64>, k: usize, gamma: f64) -> (f64, f64) {
    let ratio = linalg::offdiag_abs_row_sum(v, k) / linalg::abs_row_sum(v, k);
    (gamma * (1.0 - 0.5 * ratio), gamma / 2.0 * ratio)
}

/// Calibration-conditional margin for row `k`.
pub fn delta_cc(v: &DMatrix<f64>, k: usize, n_k: usize, n_star: usize, gamma: f64) -> f64 {
    let (g1, g2) = gamma_split(v, k, gamma);
    let s = linalg::offdiag_abs_row_sum(v, k);
    let first = ((1.0 / g1).ln() / (2.0 * n_k as f64)).sqrt();
    if s == 0.0 {
        return first;
    }
    let kk = v.nrows() as f64;
    first + 2.0 * s * (((2.0 * kk).ln() + (1.0 / g2).ln()) / (2.0 * n_star as f64)).sqrt()
}

/// Thresholds whose label-conditional coverage holds with probability
/// `1 - gamma` over the calibration draw.
pub fn adaptive_calibration_conditional(
    scores: &ScoreMatrix,
    y_noisy: &[usize],
    v: &DMatrix<f64>,
    alpha: f64,
    gamma: f64,
    optimistic: bool,
) -> Result<Thresholds> {
    check_alpha(alpha)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    check_square(v, scores.k())?;
    let ecdf = EcdfFamily::new(scores, y_noisy)?;
    ecdf.require_nonempty()?;
    let n_star = ecdf.n_star();
    let tau = (0..scores.k())
        .map(|k| {
            let n_k = ecdf.group_size(k);
            let delta = delta_cc(v, k, n_k, n_star, gamma);
            let floor = optimistic.then(|| -((1.0 / gamma).ln() / (2.0 * n_k as f64)).sqrt());
            select_threshold(ecdf.order_statistics(k), alpha, delta, floor, |t| {
                empirical_inflation(&ecdf, v, k, t)
            })
        })
        .collect();
    Thresholds::label_conditional(tau)
}
