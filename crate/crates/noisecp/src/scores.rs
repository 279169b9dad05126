//! Conformity scores and threshold prediction sets.
//!
//! Smaller scores mean more plausible labels. Label `k` enters the prediction
//! set of `x` exactly when `s(x, k) <= tau[k]`.

use rand::Rng;

use crate::error::{Error, Result};

/// Default amplitude of the uniform jitter added to scores.
pub const DEFAULT_JITTER: f64 = 1e-6;

const ROW_SUM_TOL: f64 = 1e-9;

/// Row-major `n x k` matrix of class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbabilities {
    k: usize,
    values: Vec<f64>,
}

impl ClassProbabilities {
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewLabels(k));
        }
        if values.len() % k != 0 {
            return Err(Error::DimensionMismatch { expected: k, got: values.len() % k });
        }
        for (row, r) in values.chunks(k).enumerate() {
            if let Some(x) = r.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::InvalidProbabilities { row, reason: format!("entry {x} outside [0,1]") });
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidProbabilities { row, reason: format!("row sums to {s}") });
            }
        }
        Ok(Self { k, values })
    }

    /// Divides each row by its sum; rows must be nonnegative with a positive sum.
    pub fn renormalized(k: usize, mut values: Vec<f64>) -> Result<Self> {
        if k == 0 || values.len() % k != 0 {
            return Err(Error::DimensionMismatch { expected: k, got: values.len() });
        }
        for (row, r) in values.chunks_mut(k).enumerate() {
            let s: f64 = r.iter().sum();
            if !(s > 0.0) || r.iter().any(|x| *x < 0.0) {
                return Err(Error::InvalidProbabilities { row, reason: "cannot renormalize".into() });
            }
            r.iter_mut().for_each(|x| *x /= s);
        }
        Self::new(k, values)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.k)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Most likely label of each row; ties go to the smallest index.
    pub fn argmax(&self) -> Vec<usize> {
        self.rows().map(argmax).collect()
    }

    /// Rows `range` as a new matrix.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self { k: self.k, values: self.values[range.start * self.k..range.end * self.k].to_vec() }
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = j;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    /// `1 - p(x, k)`.
    Hps,
    /// Cumulative sorted probability mass up to the rank of `k`.
    Aps { randomized: bool },
    /// Scores supplied directly by the caller.
    External,
}

/// Row-major `n x k` matrix of scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    k: usize,
    values: Vec<f64>,
    kind: ScoreKind,
    jitter: f64,
}

impl ScoreMatrix {
    pub fn from_values(k: usize, values: Vec<f64>, kind: ScoreKind, jitter: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewLabels(k));
        }
        if values.len() % k != 0 {
            return Err(Error::DimensionMismatch { expected: k, got: values.len() % k });
        }
        if let Some(i) = values.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidProbabilities { row: i / k, reason: format!("score {} outside [0,1]", values[i]) });
        }
        Ok(Self { k, values, kind, jitter })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.k + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.k)
    }

    pub fn prediction_sets(&self, tau: &Thresholds) -> Result<Vec<Vec<usize>>> {
        self.rows().map(|r| prediction_set(r, tau)).collect()
    }
}

/// `1 - p`, plus uniform noise on `[-jitter, jitter]`, clamped to `[0, 1]`.
pub fn hps_scores<R: Rng + ?Sized>(probs: &ClassProbabilities, jitter: f64, rng: &mut R) -> ScoreMatrix {
    let values = probs
        .as_slice()
        .iter()
        .map(|p| {
            let s = 1.0 - p;
            if jitter > 0.0 {
                (s + jitter * (2.0 * rng.gen::<f64>() - 1.0)).clamp(0.0, 1.0)
            } else {
                s
            }
        })
        .collect();
    ScoreMatrix { k: probs.k(), values, kind: ScoreKind::Hps, jitter }
}

/// Generalized inverse quantile scores. The randomized variant draws one
/// uniform `u` per row and reports `cumulative - u * p(x, k)`.
pub fn aps_scores<R: Rng + ?Sized>(probs: &ClassProbabilities, randomized: bool, rng: &mut R) -> ScoreMatrix {
    let k = probs.k();
    let mut values = vec![0.0; probs.as_slice().len()];
    let mut order: Vec<usize> = (0..k).collect();
    for (row, out) in probs.rows().zip(values.chunks_mut(k)) {
        order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
        // stable: equal probabilities keep label order
        order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).expect("finite probabilities"));
        let u = if randomized { rng.gen::<f64>() } else { 0.0 };
        let mut cum = 0.0;
        for &label in &order {
            cum += row[label];
            out[label] = (cum - u * row[label]).clamp(0.0, 1.0);
        }
    }
    ScoreMatrix { k, values, kind: ScoreKind::Aps { randomized }, jitter: 0.0 }
}

/// Per-label thresholds, or one threshold shared by every label.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    values: Vec<f64>,
    marginal: bool,
}

impl Thresholds {
    pub fn label_conditional(values: Vec<f64>) -> Result<Self> {
        check_unit(&values)?;
        Ok(Self { values, marginal: false })
    }

    pub fn marginal(tau: f64, k: usize) -> Result<Self> {
        check_unit(&[tau])?;
        Ok(Self { values: vec![tau; k], marginal: true })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tau(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn is_marginal(&self) -> bool {
        self.marginal
    }
}

fn check_unit(values: &[f64]) -> Result<()> {
    if let Some(x) = values.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Parse(format!("threshold {x} outside [0,1]")));
    }
    Ok(())
}

/// `{k : s_k <= tau_k}`.
pub fn prediction_set(score_row: &[f64], tau: &Thresholds) -> Result<Vec<usize>> {
    if score_row.len() != tau.k() {
        return Err(Error::DimensionMismatch { expected: tau.k(), got: score_row.len() });
    }
    Ok(score_row
        .iter()
        .zip(tau.values())
        .enumerate()
        .filter(|(_, (s, t))| s <= t)
        .map(|(k, _)| k)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    fn probs(k: usize, v: &[f64]) -> ClassProbabilities {
        ClassProbabilities::new(k, v.to_vec()).unwrap()
    }

    #[test]
    fn probability_validation() {
        assert!(ClassProbabilities::new(2, vec![0.6, 0.3]).is_err());
        assert!(ClassProbabilities::new(2, vec![1.2, -0.2]).is_err());
        let p = ClassProbabilities::renormalized(2, vec![0.49, 0.49]).unwrap();
        assert_eq!(p.row(0), &[0.5, 0.5]);
        assert_eq!(probs(3, &[0.2, 0.5, 0.3, 0.4, 0.4, 0.2]).argmax(), vec![1, 0]);
    }

    #[test]
    fn hps_exact() {
        let s = hps_scores(&probs(2, &[0.7, 0.3, 1.0, 0.0]), 0.0, &mut rng());
        assert!((s.get(0, 0) - 0.3).abs() < 1e-15);
        assert!((s.get(0, 1) - 0.7).abs() < 1e-15);
        assert_eq!(s.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn hps_jitter() {
        let s = hps_scores(&probs(2, &[0.5, 0.5]), 1e-6, &mut rng());
        assert!((s.get(0, 0) - 0.5).abs() <= 1e-6);
        assert!((s.get(0, 1) - 0.5).abs() <= 1e-6);
        assert_ne!(s.get(0, 0), s.get(0, 1));
    }

    #[test]
    fn aps_deterministic() {
        let s = aps_scores(&probs(3, &[0.6, 0.3, 0.1]), false, &mut rng());
        let want = [0.6, 0.9, 1.0];
        for (a, b) in s.row(0).iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let s = aps_scores(&probs(4, &[0.25; 4]), false, &mut rng());
        assert_eq!(s.row(0), &[0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn prediction_set_examples() {
        let all = Thresholds::label_conditional(vec![1.0; 3]).unwrap();
        assert_eq!(prediction_set(&[0.2, 1.0, 0.7], &all).unwrap(), vec![0, 1, 2]);
        let none = Thresholds::label_conditional(vec![0.0; 3]).unwrap();
        assert!(prediction_set(&[0.2, 0.1, 0.7], &none).unwrap().is_empty());
        let half = Thresholds::marginal(0.5, 2).unwrap();
        assert_eq!(prediction_set(&[0.3, 0.7], &half).unwrap(), vec![0]);
        assert!(matches!(prediction_set(&[0.3], &half), Err(Error::DimensionMismatch { .. })));
    }

    fn prob_row(k: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.001f64..1.0, k).prop_map(|w| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn aps_properties(row in prob_row(5), seed in 0u64..100) {
            let p = ClassProbabilities::new(5, row.clone()).unwrap();
            let det = aps_scores(&p, false, &mut rng());
            let mut order: Vec<usize> = (0..5).collect();
            order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap());
            for w in order.windows(2) {
                prop_assert!(det.get(0, w[0]) <= det.get(0, w[1]));
            }
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let ran = aps_scores(&p, true, &mut r);
            for k in 0..5 {
                let hi = det.get(0, k);
                let lo = hi - row[k];
                prop_assert!(ran.get(0, k) <= hi + 1e-12 && ran.get(0, k) >= lo - 1e-12);
            }
        }

        #[test]
        fn hps_definition(row in prob_row(4)) {
            let p = ClassProbabilities::new(4, row.clone()).unwrap();
            let s = hps_scores(&p, 0.0, &mut rng());
            for k in 0..4 {
                prop_assert_eq!(s.get(0, k), 1.0 - row[k]);
            }
        }

        #[test]
        fn set_monotone_and_local(
            scores in proptest::collection::vec(0.0f64..1.0, 4),
            tau in proptest::collection::vec(0.0f64..1.0, 4),
            k in 0usize..4, j in 0usize..4, bump in 0.0f64..1.0, flip in 0.0f64..1.0,
        ) {
            let base = Thresholds::label_conditional(tau.clone()).unwrap();
            let set = prediction_set(&scores, &base).unwrap();
            for l in 0..4 {
                prop_assert_eq!(set.contains(&l), scores[l] <= tau[l]);
            }
            let mut up = tau.clone();
            up[k] = (up[k] + bump).min(1.0);
            let bigger = prediction_set(&scores, &Thresholds::label_conditional(up).unwrap()).unwrap();
            prop_assert!(!set.contains(&k) || bigger.contains(&k));
            if j != k {
                let mut other = tau.clone();
                other[j] = flip;
                let s2 = prediction_set(&scores, &Thresholds::label_conditional(other).unwrap()).unwrap();
                prop_assert_eq!(s2.contains(&k), set.contains(&k));
            }
            let mut one = tau.clone();
            one[k] = 1.0;
            prop_assert!(prediction_set(&scores, &Thresholds::label_conditional(one).unwrap()).unwrap().contains(&k));
        }
    }
}
