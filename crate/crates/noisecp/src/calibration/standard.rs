use super::{check_alpha, EcdfFamily, RANK_EPS};
use crate::error::{Error, Result};
use crate::scores::{ScoreMatrix, Thresholds};

/// `ceil((1 + n)(1 - alpha))`, the 1-based rank of the calibrated order statistic.
pub fn conformal_rank(n: usize, alpha: f64) -> usize {
    ((1.0 + n as f64) * (1.0 - alpha) - RANK_EPS).ceil().max(1.0) as usize
}

fn conformal_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let r = conformal_rank(sorted.len(), alpha);
    if r > sorted.len() {
        1.0
    } else {
        sorted[r - 1]
    }
}

/// Per-label conformal quantile of `s(x_i, k)` over points with noisy label `k`.
pub fn standard_label_conditional(scores: &ScoreMatrix, y_noisy: &[usize], alpha: f64) -> Result<Thresholds> {
    check_alpha(alpha)?;
    let ecdf = EcdfFamily::new(scores, y_noisy)?;
    ecdf.require_nonempty()?;
    let tau = (0..scores.k()).map(|k| conformal_quantile(ecdf.order_statistics(k), alpha)).collect();
    Thresholds::label_conditional(tau)
}

/// Conformal quantile of the pooled scores `s(x_i, y_i)`.
pub fn standard_marginal(scores: &ScoreMatrix, y_noisy: &[usize], alpha: f64) -> Result<Thresholds> {
    check_alpha(alpha)?;
    let pooled = pooled_scores(scores, y_noisy)?;
    Thresholds::marginal(conformal_quantile(&pooled, alpha), scores.k())
}

/// Sorted `s(x_i, y_i)`.
pub(crate) fn pooled_scores(scores: &ScoreMatrix, y: &[usize]) -> Result<Vec<f64>> {
    if y.len() != scores.n() {
        return Err(Error::DimensionMismatch { expected: scores.n(), got: y.len() });
    }
    if y.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let mut v = y
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if l >= scores.k() {
                Err(Error::LabelOutOfRange { label: l, k: scores.k() })
            } else {
                Ok(scores.get(i, l))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}
