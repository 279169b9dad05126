//! Empirical coverage and set size of prediction sets.

use crate::error::{Error, Result};

/// Coverage and size of one method's sets on one test sample.
/// Per-label entries are `NaN` for labels absent from the test sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub method: String,
    pub alpha: f64,
    pub rep: usize,
    pub n_cal: usize,
    pub seed: u64,
    pub coverage: f64,
    pub avg_size: f64,
    pub label_coverage: Vec<f64>,
    pub label_size: Vec<f64>,
    /// Test points per true label.
    pub label_count: Vec<usize>,
}

/// Fractions of test points whose set contains the true label, and mean set
/// sizes, overall and within each true-label stratum. Metadata fields are left
/// empty.
pub fn evaluate(sets: &[Vec<usize>], y_true: &[usize], k: usize) -> Result<CoverageReport> {
    if sets.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if sets.len() != y_true.len() {
        return Err(Error::DimensionMismatch { expected: sets.len(), got: y_true.len() });
    }
    let mut hits = vec![0usize; k];
    let mut sizes = vec![0usize; k];
    let mut count = vec![0usize; k];
    for (set, &y) in sets.iter().zip(y_true) {
        if y >= k {
            return Err(Error::LabelOutOfRange { label: y, k });
        }
        count[y] += 1;
        sizes[y] += set.len();
        hits[y] += usize::from(set.contains(&y));
    }
    let n = sets.len() as f64;
    let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    Ok(CoverageReport {
        method: String::new(),
        alpha: f64::NAN,
        rep: 0,
        n_cal: 0,
        seed: 0,
        coverage: hits.iter().sum::<usize>() as f64 / n,
        avg_size: sizes.iter().sum::<usize>() as f64 / n,
        label_coverage: (0..k).map(|l| ratio(hits[l], count[l])).collect(),
        label_size: (0..k).map(|l| ratio(sizes[l], count[l])).collect(),
        label_count: count,
    })
}

pub const METRICS_HEADER: &str = "method,alpha,rep,label,coverage,avg_size,n_cal,seed";

/// Metrics rows: one marginal row (`label = -1`) followed by one row per label.
pub fn metrics_rows(r: &CoverageReport) -> String {
    let mut out = format!("{},{},{},-1,{},{},{},{}\n", r.method, r.alpha, r.rep, r.coverage, r.avg_size, r.n_cal, r.seed);
    for l in 0..r.label_coverage.len() {
        out.push_str(&format!(
            "{},{},{},{l},{},{},{},{}\n",
            r.method, r.alpha, r.rep, r.label_coverage[l], r.label_size[l], r.n_cal, r.seed
        ));
    }
    out
}

pub fn metrics_csv(reports: &[CoverageReport]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in reports {
        out.push_str(&metrics_rows(r));
    }
    out
}
