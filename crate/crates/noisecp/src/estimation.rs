//! Fitting the contamination model from a small clean sample and a larger
//! noisy sample, both scored by a fixed classifier `f`.
//!
//! With `Q[(l, k)] = P[f = k | clean = l]` and `Q~[(l, k)] = P[f = k | noisy = l]`
//! the estimating equation `Q~ = M Q` gives `V = Q Q~^{-1}`. The noisy-side
//! quantities are treated as known; uncertainty comes from the clean joint
//! frequencies `lambda[(l, k)] = P[f = k, clean = l]`, which are resampled by a
//! multinomial parametric bootstrap.

use std::fmt;

use nalgebra::DMatrix;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Binomial;
use rayon::prelude::*;

use crate::calibration::NoiseRegion;
use crate::contamination::{rr_inverse, two_level_inverse_entries, BlockStructure, ContaminationModel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::scores::ClassProbabilities;
use crate::seed;

/// Denominators smaller than this are treated as degenerate.
pub const DEGENERATE_TOL: f64 = 1e-6;

/// Predicted and observed labels for the clean sample and the noisy evaluation split.
#[derive(Debug, Clone, PartialEq)]
pub struct FitData {
    k: usize,
    clean_pred: Vec<usize>,
    clean_y: Vec<usize>,
    noisy_pred: Vec<usize>,
    noisy_y: Vec<usize>,
}

fn check_labels(labels: &[usize], k: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= k) {
        Some(&label) => Err(Error::LabelOutOfRange { label, k }),
        None => Ok(()),
    }
}

impl FitData {
    pub fn new(
        k: usize,
        clean_pred: Vec<usize>,
        clean_y: Vec<usize>,
        noisy_pred: Vec<usize>,
        noisy_y: Vec<usize>,
    ) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewLabels(k));
        }
        if clean_pred.len() != clean_y.len() {
            return Err(Error::DimensionMismatch { expected: clean_pred.len(), got: clean_y.len() });
        }
        if noisy_pred.len() != noisy_y.len() {
            return Err(Error::DimensionMismatch { expected: noisy_pred.len(), got: noisy_y.len() });
        }
        for v in [&clean_pred, &clean_y, &noisy_pred, &noisy_y] {
            check_labels(v, k)?;
        }
        Ok(Self { k, clean_pred, clean_y, noisy_pred, noisy_y })
    }

    /// Uses the most likely label of each probability row as the prediction.
    pub fn from_probabilities(
        clean: (&ClassProbabilities, &[usize]),
        noisy: (&ClassProbabilities, &[usize]),
    ) -> Result<Self> {
        if clean.0.k() != noisy.0.k() {
            return Err(Error::DimensionMismatch { expected: clean.0.k(), got: noisy.0.k() });
        }
        Self::new(clean.0.k(), clean.0.argmax(), clean.1.to_vec(), noisy.0.argmax(), noisy.1.to_vec())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_clean(&self) -> usize {
        self.clean_y.len()
    }

    pub fn n_noisy(&self) -> usize {
        self.noisy_y.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub low: f64,
    pub upp: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upp - self.low
    }

    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.upp
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimate {
    General,
    Rr { epsilon: f64, interval: Interval },
    TwoLevel { epsilon: f64, nu: f64, epsilon_interval: Interval, nu_interval: Interval },
}

impl Estimate {
    pub fn name(&self) -> &'static str {
        match self {
            Estimate::General => "general",
            Estimate::Rr { .. } => "rr",
            Estimate::TwoLevel { .. } => "two-level",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub k: usize,
    pub n_clean: usize,
    pub n_noisy: usize,
    pub q: DMatrix<f64>,
    pub q_tilde: DMatrix<f64>,
    /// Joint clean frequencies, `lambda[(l, k)] = P[f = k, clean = l]`.
    pub lambda: DMatrix<f64>,
    pub rho_tilde: Vec<f64>,
    pub psi: f64,
    pub psi_tilde: f64,
    pub phi: Option<f64>,
    pub phi_tilde: Option<f64>,
    pub estimate: Estimate,
    pub v_hat: DMatrix<f64>,
    pub region: NoiseRegion,
    pub alpha_v: f64,
    pub replicates: usize,
    /// Bootstrap replicates on which the estimator was defined.
    pub valid_replicates: usize,
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(",")
}

fn row_major(m: &DMatrix<f64>) -> String {
    join((0..m.nrows()).flat_map(|a| (0..m.ncols()).map(move |b| m[(a, b)])))
}

impl fmt::Display for FitSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kind={}", self.estimate.name())?;
        writeln!(f, "k={}", self.k)?;
        writeln!(f, "n_clean={}", self.n_clean)?;
        writeln!(f, "n_noisy={}", self.n_noisy)?;
        writeln!(f, "alpha_v={}", self.alpha_v)?;
        writeln!(f, "replicates={}", self.replicates)?;
        writeln!(f, "valid_replicates={}", self.valid_replicates)?;
        writeln!(f, "psi={}", self.psi)?;
        writeln!(f, "psi_tilde={}", self.psi_tilde)?;
        if let (Some(p), Some(pt)) = (self.phi, self.phi_tilde) {
            writeln!(f, "phi={p}")?;
            writeln!(f, "phi_tilde={pt}")?;
        }
        match &self.estimate {
            Estimate::General => {}
            Estimate::Rr { epsilon, interval } => {
                writeln!(f, "epsilon={epsilon}")?;
                writeln!(f, "epsilon_low={}", interval.low)?;
                writeln!(f, "epsilon_upp={}", interval.upp)?;
            }
            Estimate::TwoLevel { epsilon, nu, epsilon_interval, nu_interval } => {
                writeln!(f, "epsilon={epsilon}")?;
                writeln!(f, "epsilon_low={}", epsilon_interval.low)?;
                writeln!(f, "epsilon_upp={}", epsilon_interval.upp)?;
                writeln!(f, "nu={nu}")?;
                writeln!(f, "nu_low={}", nu_interval.low)?;
                writeln!(f, "nu_upp={}", nu_interval.upp)?;
            }
        }
        writeln!(f, "rho_tilde={}", join(self.rho_tilde.iter().copied()))?;
        writeln!(f, "v_hat={}", row_major(&self.v_hat))?;
        writeln!(f, "v_low={}", row_major(self.region.v_low()))?;
        writeln!(f, "v_upp={}", row_major(self.region.v_upp()))?;
        writeln!(f, "v_bar={}", row_major(self.region.v_bar()))?;
        writeln!(f, "zeta_upp={}", join((0..self.k).map(|a| self.region.zeta_upp(a))))
    }
}

/// Counts of `(label, prediction)` pairs.
fn counts(k: usize, labels: &[usize], pred: &[usize]) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(k, k);
    for (&l, &p) in labels.iter().zip(pred) {
        c[(l, p)] += 1.0;
    }
    c
}

/// Divides each row by its sum; the error names the first empty row.
fn row_normalize(c: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, usize> {
    let mut q = c.clone();
    for a in 0..c.nrows() {
        let s: f64 = c.row(a).sum();
        if s <= 0.0 {
            return Err(a);
        }
        q.row_mut(a).scale_mut(1.0 / s);
    }
    Ok(q)
}

/// Block accuracy: total mass on `(l, k)` pairs in the same block.
fn block_mass(m: &DMatrix<f64>, blocks: &BlockStructure) -> f64 {
    let k = m.nrows();
    (0..k).flat_map(|a| (0..k).map(move |b| (a, b))).filter(|&(a, b)| blocks.same_block(a, b)).map(|(a, b)| m[(a, b)]).sum()
}

/// `Q~` implied by a model and a clean confusion matrix, computed from the
/// joint law `P[noisy = l, f = k] = sum_j T[(l, j)] rho[j] Q[(j, k)]`.
pub fn population_q_tilde(model: &ContaminationModel, q: &DMatrix<f64>) -> DMatrix<f64> {
    let k = model.k();
    let (t, rho, rho_tilde) = (model.transition(), model.rho(), model.rho_tilde());
    DMatrix::from_fn(k, k, |l, c| (0..k).map(|j| t[(l, j)] * rho[j] * q[(j, c)]).sum::<f64>() / rho_tilde[l])
}

/// Draws `n` triples `(prediction, clean, noisy)` with clean labels from the
/// model's `rho`, predictions from the rows of `q` and noisy labels from `T`.
pub fn sample_predictions<R: Rng + ?Sized>(
    model: &ContaminationModel,
    q: &DMatrix<f64>,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let k = model.k();
    if q.nrows() != k || q.ncols() != k {
        return Err(Error::DimensionMismatch { expected: k, got: q.nrows() });
    }
    let labels = WeightedIndex::new(model.rho()).map_err(|e| Error::InvalidProbabilities { row: 0, reason: e.to_string() })?;
    let rows = (0..k)
        .map(|a| {
            WeightedIndex::new(q.row(a).iter().copied())
                .map_err(|e| Error::InvalidProbabilities { row: a, reason: e.to_string() })
        })
        .collect::<Result<Vec<_>>>()?;
    let y: Vec<usize> = (0..n).map(|_| labels.sample(rng)).collect();
    let pred = y.iter().map(|&l| rows[l].sample(rng)).collect();
    let noisy = model.corrupt_labels(&y, rng)?;
    Ok((pred, y, noisy))
}

/// `epsilon = (psi - psi_tilde) / (psi - 1/K)`, unclamped.
pub fn rr_epsilon(psi: f64, psi_tilde: f64, k: usize) -> Result<f64> {
    let d = psi - 1.0 / k as f64;
    if d < DEGENERATE_TOL {
        return Err(Error::ClassifierAtChance);
    }
    Ok((psi - psi_tilde) / d)
}

/// Solves the two-level estimating system for `(epsilon, nu)`, unclamped.
/// `nu` is reported as 0 when `epsilon` is not positive, where it is not identified.
pub fn two_level_parameters(psi: f64, psi_tilde: f64, phi: f64, phi_tilde: f64, k: usize) -> Result<(f64, f64)> {
    let h = k as f64 / 2.0;
    let d1 = h * psi - phi;
    let d2 = phi - 0.5;
    for d in [d1, d2] {
        if d.abs() < DEGENERATE_TOL {
            return Err(Error::DegenerateDenominator(d));
        }
    }
    let num = h * (psi - psi_tilde) - (phi - phi_tilde);
    let epsilon = num / d1;
    if epsilon <= DEGENERATE_TOL {
        return Ok((epsilon, 0.0));
    }
    Ok((epsilon, 1.0 - (phi - phi_tilde) * d1 / (d2 * num)))
}

/// Type-7 (linear interpolation) quantile of sorted values.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Multinomial counts via sequential binomial draws.
pub fn multinomial<R: Rng + ?Sized>(n: u64, p: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0u64; p.len()];
    let mut left = n;
    let mut mass = 1.0f64;
    for (i, &pi) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == p.len() {
            out[i] = left;
            break;
        }
        let q = if mass > 0.0 { (pi / mass).clamp(0.0, 1.0) } else { 1.0 };
        let x = Binomial::new(left, q).expect("probability in [0, 1]").sample(rng);
        out[i] = x;
        left -= x;
        mass -= pi;
    }
    out
}

/// Runs `b` multinomial replicates of `lambda` (flattened, `n` draws each),
/// keeping the replicates on which `stat` is defined. Replicate `r` uses the
/// stream `(master, r, "bootstrap")`.
fn bootstrap<T: Send>(
    lambda: &DMatrix<f64>,
    n: usize,
    b: usize,
    master: u64,
    stat: impl Fn(&DMatrix<f64>) -> Option<T> + Sync,
) -> Vec<T> {
    let k = lambda.nrows();
    let flat: Vec<f64> = (0..k).flat_map(|a| (0..k).map(move |c| lambda[(a, c)])).collect();
    (0..b)
        .into_par_iter()
        .filter_map(|r| {
            let mut rng = seed::stream(master, r as u64, "bootstrap");
            let draw = multinomial(n as u64, &flat, &mut rng);
            let star = DMatrix::from_fn(k, k, |a, c| draw[a * k + c] as f64 / n as f64);
            stat(&star)
        })
        .collect()
}

/// Two-sided percentile interval at level `level` from unsorted replicates.
fn percentile_interval(mut values: Vec<f64>, level: f64) -> Interval {
    values.sort_by(f64::total_cmp);
    Interval { low: quantile(&values, level / 2.0), upp: quantile(&values, 1.0 - level / 2.0) }
}

fn check_fit_args(alpha_v: f64, b: usize) -> Result<()> {
    if !(alpha_v > 0.0 && alpha_v < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha_v));
    }
    if b == 0 {
        return Err(Error::Config("bootstrap replicates must be positive".into()));
    }
    Ok(())
}

fn check_eps_bar(eps_bar: f64) -> Result<()> {
    if !(eps_bar > 0.0 && eps_bar < 1.0) {
        return Err(Error::EpsilonOutOfRange(eps_bar));
    }
    Ok(())
}

/// Quantities shared by all fits.
struct Common {
    k: usize,
    q: DMatrix<f64>,
    q_tilde: DMatrix<f64>,
    lambda: DMatrix<f64>,
    noisy_joint: DMatrix<f64>,
    rho_tilde: Vec<f64>,
    psi: f64,
    psi_tilde: f64,
}

impl Common {
    fn new(data: &FitData) -> Result<Self> {
        let k = data.k;
        let clean = counts(k, &data.clean_y, &data.clean_pred);
        let noisy = counts(k, &data.noisy_y, &data.noisy_pred);
        let q = row_normalize(&clean).map_err(Error::EmptyCleanClass)?;
        let q_tilde = row_normalize(&noisy).map_err(|_| Error::SingularQtilde)?;
        let lambda = clean / data.n_clean() as f64;
        let noisy_joint = noisy / data.n_noisy() as f64;
        let rho_tilde = (0..k).map(|a| noisy_joint.row(a).sum()).collect();
        let psi = lambda.trace();
        let psi_tilde = noisy_joint.trace();
        Ok(Self { k, q, q_tilde, lambda, noisy_joint, rho_tilde, psi, psi_tilde })
    }

    fn summary(
        self,
        data: &FitData,
        estimate: Estimate,
        v_hat: DMatrix<f64>,
        region: NoiseRegion,
        phi: Option<(f64, f64)>,
        alpha_v: f64,
        replicates: usize,
        valid_replicates: usize,
    ) -> FitSummary {
        FitSummary {
            k: self.k,
            n_clean: data.n_clean(),
            n_noisy: data.n_noisy(),
            q: self.q,
            q_tilde: self.q_tilde,
            lambda: self.lambda,
            rho_tilde: self.rho_tilde,
            psi: self.psi,
            psi_tilde: self.psi_tilde,
            phi: phi.map(|p| p.0),
            phi_tilde: phi.map(|p| p.1),
            estimate,
            v_hat,
            region,
            alpha_v,
            replicates,
            valid_replicates,
        }
    }
}

/// `V[(l, k)] = sum_s lambda[(l, s)] Qinv[(s, k)] / sum_s lambda[(l, s)]`.
fn v_from_lambda(lambda: &DMatrix<f64>, q_tilde_inv: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let q = row_normalize(lambda).ok()?;
    Some(q * q_tilde_inv)
}

/// Unstructured fit: `V^ = Q^ Q~^{-1}` with per-entry percentile intervals,
/// Bonferroni-adjusted over the `K(K-1)` off-diagonal entries.
pub fn fit_general<R: Rng + ?Sized>(data: &FitData, alpha_v: f64, b: usize, rng: &mut R) -> Result<FitSummary> {
    check_fit_args(alpha_v, b)?;
    let c = Common::new(data)?;
    let k = c.k;
    let q_tilde_inv = linalg::invert(&c.q_tilde).map_err(|_| Error::SingularQtilde)?;
    let v_hat = &c.q * &q_tilde_inv;
    let master = rng.gen::<u64>();
    let reps = bootstrap(&c.lambda, data.n_clean(), b, master, |star| v_from_lambda(star, &q_tilde_inv));
    if reps.is_empty() {
        return Err(Error::EmptyCleanClass((0..k).find(|&a| c.lambda.row(a).sum() == 0.0).unwrap_or(0)));
    }
    let level = alpha_v / (k * (k - 1)) as f64;
    let mut v_low = v_hat.clone();
    let mut v_upp = v_hat.clone();
    for a in 0..k {
        for l in (0..k).filter(|&l| l != a) {
            let iv = percentile_interval(reps.iter().map(|v| v[(a, l)]).collect(), level);
            v_low[(a, l)] = iv.low;
            v_upp[(a, l)] = iv.upp;
        }
    }
    let v_bar = DMatrix::from_fn(k, k, |a, l| v_low[(a, l)].abs().max(v_upp[(a, l)].abs()));
    let region = NoiseRegion::new(v_low, v_upp, v_bar, alpha_v, None)?;
    let valid = reps.len();
    Ok(c.summary(data, Estimate::General, v_hat, region, None, alpha_v, b, valid))
}

fn xi(epsilon: f64) -> f64 {
    epsilon / (1.0 - epsilon)
}

/// Randomized-response fit of `epsilon`, clamped to `[0, eps_bar]`.
pub fn fit_rr<R: Rng + ?Sized>(
    data: &FitData,
    alpha_v: f64,
    b: usize,
    eps_bar: f64,
    rng: &mut R,
) -> Result<FitSummary> {
    check_fit_args(alpha_v, b)?;
    check_eps_bar(eps_bar)?;
    let c = Common::new(data)?;
    let k = c.k;
    let epsilon = rr_epsilon(c.psi, c.psi_tilde, k)?.clamp(0.0, eps_bar);
    let master = rng.gen::<u64>();
    let psi_tilde = c.psi_tilde;
    let reps = bootstrap(&c.lambda, data.n_clean(), b, master, |star| rr_epsilon(star.trace(), psi_tilde, k).ok());
    if reps.is_empty() {
        return Err(Error::ClassifierAtChance);
    }
    let valid = reps.len();
    let raw = percentile_interval(reps, alpha_v);
    let interval = Interval { low: raw.low.clamp(0.0, eps_bar), upp: raw.upp.clamp(0.0, eps_bar) };
    let region = NoiseRegion::from_rr_interval(xi(interval.low), xi(interval.upp), xi(eps_bar), &c.rho_tilde, alpha_v)?;
    let v_hat = rr_inverse(k, epsilon, &c.rho_tilde);
    Ok(c.summary(data, Estimate::Rr { epsilon, interval }, v_hat, region, None, alpha_v, b, valid))
}

/// Two-level randomized-response fit of `(epsilon, nu)`. The level `alpha_v`
/// is split evenly between the two intervals.
pub fn fit_two_level_rr<R: Rng + ?Sized>(
    data: &FitData,
    alpha_v: f64,
    b: usize,
    eps_bar: f64,
    rng: &mut R,
) -> Result<FitSummary> {
    check_fit_args(alpha_v, b)?;
    check_eps_bar(eps_bar)?;
    let blocks = BlockStructure::new(data.k)?;
    let c = Common::new(data)?;
    let k = c.k;
    let phi = block_mass(&c.lambda, &blocks);
    let phi_tilde = block_mass(&c.noisy_joint, &blocks);
    let (e, n) = two_level_parameters(c.psi, c.psi_tilde, phi, phi_tilde, k)?;
    let (epsilon, nu) = (e.clamp(0.0, eps_bar), n.clamp(0.0, 1.0));
    let master = rng.gen::<u64>();
    let psi_tilde = c.psi_tilde;
    let reps = bootstrap(&c.lambda, data.n_clean(), b, master, |star| {
        two_level_parameters(star.trace(), psi_tilde, block_mass(star, &blocks), phi_tilde, k).ok()
    });
    if reps.is_empty() {
        return Err(Error::DegenerateDenominator(k as f64 / 2.0 * c.psi - phi));
    }
    let valid = reps.len();
    let (es, ns): (Vec<f64>, Vec<f64>) = reps.into_iter().unzip();
    let ei = percentile_interval(es, alpha_v / 2.0);
    let ni = percentile_interval(ns, alpha_v / 2.0);
    let epsilon_interval = Interval { low: ei.low.clamp(0.0, eps_bar), upp: ei.upp.clamp(0.0, eps_bar) };
    let nu_interval = Interval { low: ni.low.clamp(0.0, 1.0), upp: ni.upp.clamp(0.0, 1.0) };
    let region = NoiseRegion::from_two_level_interval(
        k,
        (xi(epsilon_interval.low), xi(epsilon_interval.upp)),
        (nu_interval.low, nu_interval.upp),
        xi(eps_bar),
        alpha_v,
    )?;
    let (diag, within, cross) = two_level_inverse_entries(k, epsilon, nu);
    let v_hat = DMatrix::from_fn(k, k, |a, l| {
        if a == l {
            diag
        } else if blocks.same_block(a, l) {
            within
        } else {
            cross
        }
    });
    let estimate = Estimate::TwoLevel { epsilon, nu, epsilon_interval, nu_interval };
    Ok(c.summary(data, estimate, v_hat, region, Some((phi, phi_tilde)), alpha_v, b, valid))
}
