//! Empirical score distributions grouped by noisy label.

use crate::error::{Error, Result};
use crate::scores::ScoreMatrix;

/// For each pair `(l, k)`, the sorted scores `s(x_i, k)` over calibration
/// points with noisy label `l`.
#[derive(Debug, Clone)]
pub struct EcdfFamily {
    k: usize,
    sizes: Vec<usize>,
    sorted: Vec<Vec<f64>>,
}

impl EcdfFamily {
    pub fn new(scores: &ScoreMatrix, y_noisy: &[usize]) -> Result<Self> {
        let k = scores.k();
        if y_noisy.len() != scores.n() {
            return Err(Error::DimensionMismatch { expected: scores.n(), got: y_noisy.len() });
        }
        let mut sizes = vec![0; k];
        let mut sorted = vec![Vec::new(); k * k];
        for (i, &l) in y_noisy.iter().enumerate() {
            if l >= k {
                return Err(Error::LabelOutOfRange { label: l, k });
            }
            sizes[l] += 1;
            for (j, &s) in scores.row(i).iter().enumerate() {
                sorted[l * k + j].push(s);
            }
        }
        sorted.iter_mut().for_each(|v| v.sort_by(f64::total_cmp));
        Ok(Self { k, sizes, sorted })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn group_size(&self, l: usize) -> usize {
        self.sizes[l]
    }

    pub fn n_total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Smallest group size.
    pub fn n_star(&self) -> usize {
        self.sizes.iter().copied().min().unwrap_or(0)
    }

    /// Fails on the first empty group.
    pub fn require_nonempty(&self) -> Result<()> {
        match self.sizes.iter().position(|&n| n == 0) {
            Some(l) => Err(Error::EmptyLabelClass(l)),
            None => Ok(()),
        }
    }

    /// Sorted `s(x_i, k)` over points with noisy label `l`.
    pub fn sorted(&self, l: usize, k: usize) -> &[f64] {
        &self.sorted[l * self.k + k]
    }

    /// Ascending order statistics of `s(x_i, k)` within group `k`.
    pub fn order_statistics(&self, k: usize) -> &[f64] {
        self.sorted(k, k)
    }

    /// Right-continuous ECDF of `s(x, k)` within group `l`; zero for an empty group.
    pub fn cdf(&self, l: usize, k: usize, t: f64) -> f64 {
        let v = self.sorted(l, k);
        if v.is_empty() {
            return 0.0;
        }
        v.partition_point(|&x| x <= t) as f64 / v.len() as f64
    }
}
