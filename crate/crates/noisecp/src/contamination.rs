//! Label contamination models.
//!
//! A model is described by its column-stochastic transition matrix
//! `T[(k, l)] = P[noisy = k | clean = l]` and the clean label frequencies `rho`.
//! Bayes' rule gives the row-stochastic mixture matrix
//! `M[(k, l)] = P[clean = l | noisy = k] = T[(k, l)] rho[l] / rho_tilde[k]`,
//! and the adaptive calibration methods work with `V = M^{-1}`.

use std::fmt;

use nalgebra::DMatrix;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;

const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    General,
    Rr { epsilon: f64 },
    TwoLevelRr { epsilon: f64, nu: f64 },
    BlockDiag { epsilon: f64 },
    RandomU { epsilon: f64, seed: u64 },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::General => "general",
            ModelKind::Rr { .. } => "rr",
            ModelKind::TwoLevelRr { .. } => "two-level",
            ModelKind::BlockDiag { .. } => "block",
            ModelKind::RandomU { .. } => "random",
        }
    }
}

/// Partition of `0..k` into the first and second contiguous halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockStructure {
    k: usize,
}

impl BlockStructure {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewLabels(k));
        }
        if k % 2 != 0 {
            return Err(Error::OddK(k));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn block_of(&self, label: usize) -> usize {
        usize::from(label >= self.k / 2)
    }

    pub fn same_block(&self, a: usize, b: usize) -> bool {
        self.block_of(a) == self.block_of(b)
    }

    pub fn members(&self, block: usize) -> std::ops::Range<usize> {
        let h = self.k / 2;
        if block == 0 {
            0..h
        } else {
            h..self.k
        }
    }
}

/// Immutable contamination model; cheap to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminationModel {
    k: usize,
    transition: DMatrix<f64>,
    mixture: DMatrix<f64>,
    inverse: DMatrix<f64>,
    rho: Vec<f64>,
    rho_tilde: Vec<f64>,
    kind: ModelKind,
}

pub fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

fn check_rho(rho: &[f64], k: usize) -> Result<()> {
    if rho.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: rho.len() });
    }
    for (index, &value) in rho.iter().enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonPositiveFrequency { index, value });
        }
    }
    let s: f64 = rho.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::FrequenciesNotNormalized(s));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    Ok(())
}

fn mixture_from(t: &DMatrix<f64>, rho: &[f64], rho_tilde: &[f64]) -> Result<DMatrix<f64>> {
    let k = rho.len();
    if let Some(&r) = rho_tilde.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::SingularM(if r == 0.0 { f64::INFINITY } else { r }));
    }
    Ok(DMatrix::from_fn(k, k, |a, b| t[(a, b)] * rho[b] / rho_tilde[a]))
}

/// Clean frequencies `rho` solving `T rho = rho_tilde`.
pub fn clean_frequencies_from_transition(t: &DMatrix<f64>, rho_tilde: &[f64]) -> Result<Vec<f64>> {
    let k = rho_tilde.len();
    if t.nrows() != k || t.ncols() != k {
        return Err(Error::DimensionMismatch { expected: k, got: t.nrows() });
    }
    let t_inv = linalg::invert(t)?;
    let rho: Vec<f64> = (0..k).map(|a| (0..k).map(|b| t_inv[(a, b)] * rho_tilde[b]).sum()).collect();
    check_rho(&rho, k)?;
    Ok(rho)
}

/// Closed-form inverse of the randomized-response mixture matrix.
pub fn rr_inverse(k: usize, epsilon: f64, rho_tilde: &[f64]) -> DMatrix<f64> {
    let e = epsilon / k as f64;
    DMatrix::from_fn(k, k, |a, b| {
        let d = rho_tilde[a] - e;
        let off = e * rho_tilde[b] / d;
        if a == b {
            rho_tilde[a] / d - off
        } else {
            -off
        }
    })
}

/// Closed-form entries of the two-level inverse as `(diagonal, within-block, cross-block)`.
pub fn two_level_inverse_entries(k: usize, epsilon: f64, nu: f64) -> (f64, f64, f64) {
    let kf = k as f64;
    let d = 1.0 - epsilon * (1.0 - nu);
    let base = epsilon / (kf * (1.0 - epsilon));
    let diag = (1.0 - epsilon / kf) / (1.0 - epsilon) - epsilon * nu / (kf * (1.0 - epsilon) * d);
    let within = -base * (1.0 + nu / d);
    let cross = -base * (1.0 - nu / d);
    (diag, within, cross)
}

/// Column-stochastic structure used by the block experiments: `K/2` diagonal
/// blocks of ones, each column divided by its block size.
pub fn block_structure_matrix(k: usize) -> Result<DMatrix<f64>> {
    BlockStructure::new(k)?;
    Ok(DMatrix::from_fn(k, k, |a, b| if a / 2 == b / 2 { 0.5 } else { 0.0 }))
}

impl ContaminationModel {
    /// Randomized response: with probability `epsilon` the label is replaced by
    /// a uniform draw over all `k` labels.
    pub fn build_rr(k: usize, epsilon: f64, rho: &[f64]) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewLabels(k));
        }
        check_epsilon(epsilon)?;
        check_rho(rho, k)?;
        let e = epsilon / k as f64;
        let t = DMatrix::from_fn(k, k, |a, b| if a == b { 1.0 - epsilon + e } else { e });
        let rho_tilde: Vec<f64> = rho.iter().map(|r| (1.0 - epsilon) * r + e).collect();
        let mixture = mixture_from(&t, rho, &rho_tilde)?;
        let inverse = rr_inverse(k, epsilon, &rho_tilde);
        Ok(Self {
            k,
            transition: t,
            mixture,
            inverse,
            rho: rho.to_vec(),
            rho_tilde,
            kind: ModelKind::Rr { epsilon },
        })
    }

    /// Two-level randomized response over the two contiguous label halves,
    /// with uniform clean frequencies.
    pub fn build_two_level_rr(k: usize, epsilon: f64, nu: f64) -> Result<Self> {
        let blocks = BlockStructure::new(k)?;
        check_epsilon(epsilon)?;
        if !(0.0..=1.0).contains(&nu) {
            return Err(Error::NuOutOfRange(nu));
        }
        let kf = k as f64;
        let within = epsilon * (1.0 + nu) / kf;
        let cross = epsilon * (1.0 - nu) / kf;
        let t = DMatrix::from_fn(k, k, |a, b| {
            if a == b {
                1.0 - epsilon + within
            } else if blocks.same_block(a, b) {
                within
            } else {
                cross
            }
        });
        let rho = uniform(k);
        let rho_tilde = rho.clone();
        let mixture = mixture_from(&t, &rho, &rho_tilde)?;
        let (vd, vw, vc) = two_level_inverse_entries(k, epsilon, nu);
        let inverse = DMatrix::from_fn(k, k, |a, b| {
            if a == b {
                vd
            } else if blocks.same_block(a, b) {
                vw
            } else {
                vc
            }
        });
        Ok(Self {
            k,
            transition: t,
            mixture,
            inverse,
            rho,
            rho_tilde,
            kind: ModelKind::TwoLevelRr { epsilon, nu },
        })
    }

    /// General model from a transition matrix; `V` is obtained numerically.
    pub fn build_from_transition(t: DMatrix<f64>, rho: &[f64]) -> Result<Self> {
        Self::from_transition_with_kind(t, rho, ModelKind::General)
    }

    /// `T = (1-eps) I + eps * B` with `B` pairing labels `(0,1), (2,3), ...`.
    pub fn block_diagonal(k: usize, epsilon: f64, rho: &[f64]) -> Result<Self> {
        check_epsilon(epsilon)?;
        let b = block_structure_matrix(k)?;
        let t = DMatrix::identity(k, k) * (1.0 - epsilon) + b * epsilon;
        Self::from_transition_with_kind(t, rho, ModelKind::BlockDiag { epsilon })
    }

    /// `T = (1-eps) I + eps * U` with `U` uniform on `[0,1]` and columns
    /// normalized to sum to one, drawn from `seed`.
    pub fn random_u(k: usize, epsilon: f64, seed: u64, rho: &[f64]) -> Result<Self> {
        check_epsilon(epsilon)?;
        if k < 2 {
            return Err(Error::TooFewLabels(k));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = DMatrix::from_fn(k, k, |_, _| rng.gen::<f64>());
        for mut col in u.column_iter_mut() {
            let s = col.sum();
            col /= s;
        }
        let t = DMatrix::identity(k, k) * (1.0 - epsilon) + u * epsilon;
        Self::from_transition_with_kind(t, rho, ModelKind::RandomU { epsilon, seed })
    }

    fn from_transition_with_kind(t: DMatrix<f64>, rho: &[f64], kind: ModelKind) -> Result<Self> {
        let k = t.nrows();
        if t.ncols() != k {
            return Err(Error::DimensionMismatch { expected: k, got: t.ncols() });
        }
        if k < 2 {
            return Err(Error::TooFewLabels(k));
        }
        check_rho(rho, k)?;
        for (column, col) in t.column_iter().enumerate() {
            let bad_entry = col.iter().any(|&x| !(-PROB_TOL..=1.0 + PROB_TOL).contains(&x));
            if bad_entry || (col.sum() - 1.0).abs() > PROB_TOL {
                return Err(Error::NotColumnStochastic { column });
            }
        }
        let rho_tilde: Vec<f64> = (0..k)
            .map(|a| (0..k).map(|b| t[(a, b)] * rho[b]).sum())
            .collect();
        let mixture = mixture_from(&t, rho, &rho_tilde)?;
        let inverse = linalg::invert(&mixture)?;
        Ok(Self {
            k,
            transition: t,
            mixture,
            inverse,
            rho: rho.to_vec(),
            rho_tilde,
            kind,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn mixture(&self) -> &DMatrix<f64> {
        &self.mixture
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn rho_tilde(&self) -> &[f64] {
        &self.rho_tilde
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Draws each noisy label independently from column `y[i]` of `T`.
    pub fn corrupt_labels<R: Rng + ?Sized>(&self, y: &[usize], rng: &mut R) -> Result<Vec<usize>> {
        let columns: Vec<WeightedIndex<f64>> = self
            .transition
            .column_iter()
            .map(|c| {
                let w: Vec<f64> = c.iter().map(|x| x.max(0.0)).collect();
                WeightedIndex::new(w).expect("transition columns are distributions")
            })
            .collect();
        y.iter()
            .map(|&label| {
                if label >= self.k {
                    return Err(Error::LabelOutOfRange { label, k: self.k });
                }
                Ok(columns[label].sample(rng))
            })
            .collect()
    }

    /// Flat `key=value` block: `k`, `kind`, kind parameters, `transition`
    /// (row-major), `rho`.
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{line}`")))?;
            fields.insert(key.trim().to_string(), value.trim().to_string());
        }
        let get = |key: &str| {
            fields
                .get(key)
                .cloned()
                .ok_or_else(|| Error::Parse(format!("missing `{key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("`{key}`: {e}")))
        };
        let k: usize = get("k")?
            .parse()
            .map_err(|e| Error::Parse(format!("`k`: {e}")))?;
        let rho = parse_list(&get("rho")?)?;
        let model = match get("kind")?.as_str() {
            "rr" => Self::build_rr(k, num("epsilon")?, &rho)?,
            "two-level" => Self::build_two_level_rr(k, num("epsilon")?, num("nu")?)?,
            "block" => Self::block_diagonal(k, num("epsilon")?, &rho)?,
            "random" => {
                let seed = get("seed")?
                    .parse()
                    .map_err(|e| Error::Parse(format!("`seed`: {e}")))?;
                Self::random_u(k, num("epsilon")?, seed, &rho)?
            }
            "general" => {
                let t = parse_list(&get("transition")?)?;
                if t.len() != k * k {
                    return Err(Error::DimensionMismatch { expected: k * k, got: t.len() });
                }
                Self::build_from_transition(DMatrix::from_row_slice(k, k, &t), &rho)?
            }
            other => return Err(Error::Parse(format!("unknown kind `{other}`"))),
        };
        Ok(model)
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("`{x}`: {e}")))
        })
        .collect()
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for ContaminationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "k={}", self.k)?;
        writeln!(f, "kind={}", self.kind.name())?;
        match self.kind {
            ModelKind::General => {}
            ModelKind::Rr { epsilon } | ModelKind::BlockDiag { epsilon } => {
                writeln!(f, "epsilon={epsilon}")?
            }
            ModelKind::TwoLevelRr { epsilon, nu } => {
                writeln!(f, "epsilon={epsilon}")?;
                writeln!(f, "nu={nu}")?;
            }
            ModelKind::RandomU { epsilon, seed } => {
                writeln!(f, "epsilon={epsilon}")?;
                writeln!(f, "seed={seed}")?;
            }
        }
        writeln!(f, "transition={}", join(self.transition.transpose().iter().copied()))?;
        writeln!(f, "rho={}", join(self.rho.iter().copied()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn mat(k: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(k, k, v)
    }

    #[test]
    fn clean_frequencies_round_trip() {
        let rho = [0.5, 0.3, 0.2];
        let m = ContaminationModel::build_rr(3, 0.3, &rho).unwrap();
        let back = clean_frequencies_from_transition(m.transition(), m.rho_tilde()).unwrap();
        for (a, b) in back.iter().zip(rho) {
            assert!((a - b).abs() < 1e-12);
        }
        let bad = clean_frequencies_from_transition(m.transition(), &[0.9, 0.1, 0.0]);
        assert!(matches!(bad, Err(Error::NonPositiveFrequency { .. }) | Err(Error::FrequenciesNotNormalized(_))));
    }

    fn identity_gap(m: &ContaminationModel) -> f64 {
        let i = DMatrix::identity(m.k(), m.k());
        linalg::norm_inf(&(m.mixture() * m.inverse() - &i))
            .max(linalg::norm_inf(&(m.inverse() * m.mixture() - i)))
    }

    #[test]
    fn rr_zero_noise_is_identity() {
        let m = ContaminationModel::build_rr(2, 0.0, &uniform(2)).unwrap();
        assert_eq!(m.mixture(), &DMatrix::identity(2, 2));
        assert_eq!(m.inverse(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn rr_two_labels() {
        let m = ContaminationModel::build_rr(2, 0.2, &uniform(2)).unwrap();
        assert!(linalg::max_abs_diff(m.mixture(), &mat(2, &[0.9, 0.1, 0.1, 0.9])) < 1e-15);
        let v = linalg::invert(m.mixture()).unwrap();
        let want = mat(2, &[1.125, -0.125, -0.125, 1.125]);
        assert!(linalg::max_abs_diff(&v, &want) < 1e-14);
        assert!(linalg::max_abs_diff(m.inverse(), &want) < 1e-14);
    }

    #[test]
    fn rr_four_labels_closed_form() {
        let m = ContaminationModel::build_rr(4, 0.2, &uniform(4)).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let want = if a == b { 1.1875 } else { -0.0625 };
                assert!((m.inverse()[(a, b)] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rr_rejects_bad_inputs() {
        assert!(matches!(
            ContaminationModel::build_rr(2, 1.0, &uniform(2)),
            Err(Error::EpsilonOutOfRange(_))
        ));
        assert!(matches!(
            ContaminationModel::build_rr(2, 0.1, &[1.0, 0.0]),
            Err(Error::NonPositiveFrequency { index: 1, .. })
        ));
    }

    #[test]
    fn two_level_matches_rr_at_nu_zero() {
        let a = ContaminationModel::build_two_level_rr(4, 0.2, 0.0).unwrap();
        let b = ContaminationModel::build_rr(4, 0.2, &uniform(4)).unwrap();
        assert_eq!(a.transition(), b.transition());
        assert!(linalg::max_abs_diff(a.inverse(), b.inverse()) < 1e-15);
    }

    #[test]
    fn two_level_entries() {
        let m = ContaminationModel::build_two_level_rr(4, 0.2, 0.5).unwrap();
        let t = m.transition();
        assert!((t[(0, 0)] - 0.875).abs() < 1e-15);
        assert!((t[(0, 1)] - 0.075).abs() < 1e-15);
        assert!((t[(0, 2)] - 0.025).abs() < 1e-15);
        let full = ContaminationModel::build_two_level_rr(4, 0.2, 1.0).unwrap();
        assert_eq!(full.transition()[(0, 2)], 0.0);
        assert_eq!(full.transition()[(3, 1)], 0.0);
    }

    #[test]
    fn two_level_errors() {
        assert!(matches!(ContaminationModel::build_two_level_rr(3, 0.1, 0.5), Err(Error::OddK(3))));
        assert!(matches!(
            ContaminationModel::build_two_level_rr(4, 0.1, 1.5),
            Err(Error::NuOutOfRange(_))
        ));
    }

    #[test]
    fn transition_identity_and_round_trip() {
        let m = ContaminationModel::build_from_transition(DMatrix::identity(3, 3), &[0.2, 0.3, 0.5]).unwrap();
        assert_eq!(m.inverse(), &DMatrix::identity(3, 3));
        let rr = ContaminationModel::build_rr(2, 0.2, &uniform(2)).unwrap();
        let g = ContaminationModel::build_from_transition(rr.transition().clone(), rr.rho()).unwrap();
        assert!(linalg::max_abs_diff(g.mixture(), rr.mixture()) < 1e-15);
        assert!(linalg::max_abs_diff(g.inverse(), rr.inverse()) < 1e-13);
    }

    #[test]
    fn transition_must_be_stochastic() {
        let t = mat(2, &[0.9, 0.2, 0.2, 0.9]);
        assert!(matches!(
            ContaminationModel::build_from_transition(t, &uniform(2)),
            Err(Error::NotColumnStochastic { column: 0 })
        ));
        let t = mat(2, &[0.5, 0.5, 0.5, 0.5]);
        assert!(matches!(
            ContaminationModel::build_from_transition(t, &uniform(2)),
            Err(Error::SingularM(_))
        ));
    }

    #[test]
    fn block_experiment_matrix() {
        let m = ContaminationModel::block_diagonal(4, 0.2, &uniform(4)).unwrap();
        let want = mat(
            4,
            &[0.9, 0.1, 0.0, 0.0, 0.1, 0.9, 0.0, 0.0, 0.0, 0.0, 0.9, 0.1, 0.0, 0.0, 0.1, 0.9],
        );
        assert!(linalg::max_abs_diff(m.mixture(), &want) < 1e-15);
        assert!(identity_gap(&m) < 1e-10);
    }

    #[test]
    fn random_u_is_seeded() {
        let a = ContaminationModel::random_u(4, 0.3, 7, &uniform(4)).unwrap();
        let b = ContaminationModel::random_u(4, 0.3, 7, &uniform(4)).unwrap();
        let c = ContaminationModel::random_u(4, 0.3, 8, &uniform(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.transition(), c.transition());
        assert!(identity_gap(&a) < 1e-10);
    }

    #[test]
    fn corrupt_identity_and_flip_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y: Vec<usize> = (0..1000).map(|i| i % 3).collect();
        let id = ContaminationModel::build_from_transition(DMatrix::identity(3, 3), &uniform(3)).unwrap();
        assert_eq!(id.corrupt_labels(&y, &mut rng).unwrap(), y);

        let m = ContaminationModel::build_rr(2, 0.2, &uniform(2)).unwrap();
        let y: Vec<usize> = (0..100_000).map(|_| rng.gen_range(0..2)).collect();
        let yt = m.corrupt_labels(&y, &mut rng).unwrap();
        let flips = y.iter().zip(&yt).filter(|(a, b)| a != b).count() as f64 / y.len() as f64;
        assert!((flips - 0.10).abs() < 0.005, "flip rate {flips}");

        assert!(matches!(
            m.corrupt_labels(&[2], &mut rng),
            Err(Error::LabelOutOfRange { label: 2, k: 2 })
        ));
    }

    #[test]
    fn corrupt_two_level_stays_in_block() {
        let m = ContaminationModel::build_two_level_rr(4, 0.5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let yt = m.corrupt_labels(&vec![1; 10_000], &mut rng).unwrap();
        assert!(yt.iter().all(|&l| l < 2));
        assert!(yt.contains(&0));
    }

    #[test]
    fn corrupt_reproduces_columns() {
        let m = ContaminationModel::random_u(3, 0.4, 11, &uniform(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 60_000;
        for l in 0..3 {
            let yt = m.corrupt_labels(&vec![l; n], &mut rng).unwrap();
            let mut chi2 = 0.0;
            for k in 0..3 {
                let obs = yt.iter().filter(|&&x| x == k).count() as f64;
                let exp = n as f64 * m.transition()[(k, l)];
                chi2 += (obs - exp).powi(2) / exp;
            }
            // 2 degrees of freedom; 0.999 quantile is about 13.8
            assert!(chi2 < 13.8, "column {l}: chi2 {chi2}");
        }
    }

    #[test]
    fn text_round_trip() {
        let models = [
            ContaminationModel::build_rr(3, 0.15, &[0.2, 0.3, 0.5]).unwrap(),
            ContaminationModel::build_two_level_rr(4, 0.2, 0.5).unwrap(),
            ContaminationModel::block_diagonal(4, 0.1, &uniform(4)).unwrap(),
            ContaminationModel::random_u(4, 0.1, 9, &uniform(4)).unwrap(),
            ContaminationModel::build_from_transition(mat(2, &[0.7, 0.2, 0.3, 0.8]), &[0.4, 0.6]).unwrap(),
        ];
        for m in models {
            let back = ContaminationModel::from_text(&m.to_text()).unwrap();
            assert_eq!(back, m);
        }
    }

    proptest! {
        #[test]
        fn rr_invariants(k in 2usize..9, eps in 0.0f64..0.9, w in proptest::collection::vec(0.05f64..1.0, 8)) {
            let s: f64 = w[..k].iter().sum();
            let rho: Vec<f64> = w[..k].iter().map(|x| x / s).collect();
            let m = ContaminationModel::build_rr(k, eps, &rho).unwrap();
            prop_assert!(identity_gap(&m) < 1e-10);
            for r in linalg::row_sums(m.inverse()) {
                prop_assert!((r - 1.0).abs() < 1e-10);
            }
            for r in linalg::row_sums(m.mixture()) {
                prop_assert!((r - 1.0).abs() < 1e-12);
            }
            for a in 0..k {
                let tr: f64 = (0..k).map(|b| m.transition()[(a, b)] * rho[b]).sum();
                prop_assert!((tr - m.rho_tilde()[a]).abs() < 1e-15);
                let back: f64 = (0..k).map(|b| m.mixture()[(b, a)] * m.rho_tilde()[b]).sum();
                prop_assert!((back - rho[a]).abs() < 1e-12);
            }
            let numeric = linalg::invert(m.mixture()).unwrap();
            prop_assert!(linalg::max_abs_diff(&numeric, m.inverse()) < 1e-10);
        }

        #[test]
        fn general_invariants(k in 2usize..7, eps in 0.0f64..0.6, seed in 0u64..1000) {
            let m = ContaminationModel::random_u(k, eps, seed, &uniform(k)).unwrap();
            prop_assert!(identity_gap(&m) < 1e-10);
            for r in linalg::row_sums(m.inverse()) {
                prop_assert!((r - 1.0).abs() < 1e-10);
            }
            for c in m.transition().column_iter() {
                prop_assert!((c.sum() - 1.0).abs() < 1e-12);
            }
        }
    }
}
