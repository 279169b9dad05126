//! Delimited text formats.
//!
//! Score files have the header `id,y_noisy,y_true,p0,...,p{K-1}` (or
//! `s0,...` for precomputed scores). Labels are 0-based and `y_true = -1`
//! marks an unknown clean label. Threshold tables have the header
//! `label,tau,method,alpha,delta`.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scores::{aps_scores, hps_scores, ClassProbabilities, ScoreKind, ScoreMatrix, Thresholds};

const ROW_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IngestOptions {
    /// Columns hold conformity scores `s0..` instead of probabilities `p0..`.
    pub scores: bool,
    /// Divide probability rows by their sum instead of rejecting them.
    pub renormalize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IngestedValues {
    Probabilities(ClassProbabilities),
    Scores(ScoreMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub ids: Vec<String>,
    pub y_noisy: Vec<usize>,
    /// Clean labels, `None` where the file has `-1`.
    pub y_true: Vec<Option<usize>>,
    pub values: IngestedValues,
}

impl Ingested {
    pub fn k(&self) -> usize {
        match &self.values {
            IngestedValues::Probabilities(p) => p.k(),
            IngestedValues::Scores(s) => s.k(),
        }
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// All clean labels, when every row has one.
    pub fn clean_labels(&self) -> Option<Vec<usize>> {
        self.y_true.iter().copied().collect()
    }

    /// Conformity scores, computed from probabilities with `kind` when needed.
    pub fn score_matrix<R: Rng + ?Sized>(&self, kind: ScoreKind, jitter: f64, rng: &mut R) -> ScoreMatrix {
        match &self.values {
            IngestedValues::Scores(s) => s.clone(),
            IngestedValues::Probabilities(p) => match kind {
                ScoreKind::Aps { randomized } => aps_scores(p, randomized, rng),
                ScoreKind::Hps | ScoreKind::External => hps_scores(p, jitter, rng),
            },
        }
    }
}

fn parse_label(field: &str, k: usize, line: usize, allow_unknown: bool) -> Result<Option<usize>> {
    let bad = || Error::BadLabel { line, value: field.to_string() };
    let v: i64 = field.trim().parse().map_err(|_| bad())?;
    if v == -1 && allow_unknown {
        return Ok(None);
    }
    if v < 0 || v as usize >= k {
        return Err(bad());
    }
    Ok(Some(v as usize))
}

/// Parses the contents of a score file. Line numbers in errors are 1-based
/// and count the header.
pub fn parse_score_text(text: &str, options: IngestOptions) -> Result<Ingested> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::SchemaMismatch { line: 1, reason: "empty file".into() })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let prefix = if options.scores { "s" } else { "p" };
    if cols.len() < 5 || cols[..3] != ["id", "y_noisy", "y_true"] {
        return Err(Error::SchemaMismatch { line: 1, reason: format!("header must be id,y_noisy,y_true,{prefix}0,...") });
    }
    let k = cols.len() - 3;
    for (j, c) in cols[3..].iter().enumerate() {
        if *c != format!("{prefix}{j}") {
            return Err(Error::SchemaMismatch { line: 1, reason: format!("column {} should be {prefix}{j}, found {c}", j + 4) });
        }
    }
    let mut ids = Vec::new();
    let mut y_noisy = Vec::new();
    let mut y_true = Vec::new();
    let mut values = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != k + 3 {
            return Err(Error::SchemaMismatch { line, reason: format!("expected {} columns, found {}", k + 3, fields.len()) });
        }
        ids.push(fields[0].trim().to_string());
        y_noisy.push(parse_label(fields[1], k, line, false)?.expect("known label"));
        y_true.push(parse_label(fields[2], k, line, true)?);
        let row: Vec<f64> = fields[3..]
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| (0.0..=1.0).contains(x))
                    .ok_or_else(|| Error::SchemaMismatch { line, reason: format!("value {f:?} is not a number in [0,1]") })
            })
            .collect::<Result<_>>()?;
        if !options.scores {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL && !options.renormalize {
                return Err(Error::NonNormalizedRow { line, sum });
            }
            if !(sum > 0.0) {
                return Err(Error::NonNormalizedRow { line, sum });
            }
        }
        values.extend(row);
    }
    let values = if options.scores {
        IngestedValues::Scores(ScoreMatrix::from_values(k, values, ScoreKind::External, 0.0)?)
    } else {
        IngestedValues::Probabilities(ClassProbabilities::renormalized(k, values)?)
    };
    Ok(Ingested { ids, y_noisy, y_true, values })
}

pub fn ingest_scores(path: &Path, options: IngestOptions) -> Result<Ingested> {
    parse_score_text(&std::fs::read_to_string(path)?, options)
}

/// Writes probabilities in the score-file format; ids are row indices.
pub fn write_probabilities(probs: &ClassProbabilities, y_noisy: &[usize], y_true: Option<&[usize]>) -> String {
    let k = probs.k();
    let mut out = String::from("id,y_noisy,y_true");
    for j in 0..k {
        out.push_str(&format!(",p{j}"));
    }
    out.push('\n');
    for (i, row) in probs.rows().enumerate() {
        let t = y_true.map_or(-1, |y| y[i] as i64);
        out.push_str(&format!("{i},{},{t}", y_noisy[i]));
        for p in row {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
    }
    out
}

pub const THRESHOLD_HEADER: &str = "label,tau,method,alpha,delta";

pub fn write_thresholds(tau: &Thresholds, method: &str, alpha: f64, delta: &[f64]) -> String {
    let mut out = format!("{THRESHOLD_HEADER}\n");
    for (l, t) in tau.values().iter().enumerate() {
        out.push_str(&format!("{l},{t},{method},{alpha},{}\n", delta.get(l).copied().unwrap_or(0.0)));
    }
    out
}

/// Reads a threshold table, returning the thresholds in label order.
pub fn parse_thresholds(text: &str) -> Result<Thresholds> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == THRESHOLD_HEADER => {}
        _ => return Err(Error::SchemaMismatch { line: 1, reason: format!("header must be {THRESHOLD_HEADER}") }),
    }
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() != 5 {
            return Err(Error::SchemaMismatch { line, reason: format!("expected 5 columns, found {}", f.len()) });
        }
        let label = f[0].trim().parse::<usize>().map_err(|_| Error::BadLabel { line, value: f[0].to_string() })?;
        let tau = f[1]
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::SchemaMismatch { line, reason: format!("tau {:?}: {e}", f[1]) })?;
        rows.push((label, tau));
    }
    rows.sort_by_key(|r| r.0);
    if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(Error::SchemaMismatch { line: 1, reason: "labels must be 0..K-1, each once".into() });
    }
    Thresholds::label_conditional(rows.into_iter().map(|r| r.1).collect())
}

/// One line per point: `id,set` with the set's labels separated by spaces.
pub fn write_sets(ids: &[String], sets: &[Vec<usize>]) -> String {
    let mut out = String::from("id,set\n");
    for (id, set) in ids.iter().zip(sets) {
        let labels: Vec<String> = set.iter().map(|l| l.to_string()).collect();
        out.push_str(&format!("{id},{}\n", labels.join(" ")));
    }
    out
}
