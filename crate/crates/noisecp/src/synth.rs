//! Synthetic classification data and simple probability models.
//!
//! Three generators are provided, each returning its exact posterior as an
//! oracle model: a Gaussian mixture around hypercube vertices, a multinomial
//! logistic model with Gaussian features, and a small decision tree over four
//! discrete features. [`train_logistic`] fits a multinomial logistic model.

use std::fmt;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, WeightedIndex};

use crate::error::{Error, Result};
use crate::scores::ClassProbabilities;
use crate::seed;

/// Features `x` (`n x d`), clean labels `y` and optionally noisy labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    k: usize,
    x: DMatrix<f64>,
    y: Vec<usize>,
    y_noisy: Option<Vec<usize>>,
}

impl LabeledDataset {
    pub fn new(k: usize, x: DMatrix<f64>, y: Vec<usize>) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewLabels(k));
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
        }
        if let Some(&label) = y.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange { label, k });
        }
        Ok(Self { k, x, y, y_noisy: None })
    }

    pub fn with_noisy(mut self, y_noisy: Vec<usize>) -> Result<Self> {
        if y_noisy.len() != self.y.len() {
            return Err(Error::DimensionMismatch { expected: self.y.len(), got: y_noisy.len() });
        }
        if let Some(&label) = y_noisy.iter().find(|&&l| l >= self.k) {
            return Err(Error::LabelOutOfRange { label, k: self.k });
        }
        self.y_noisy = Some(y_noisy);
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn y_noisy(&self) -> Option<&[usize]> {
        self.y_noisy.as_deref()
    }

    /// Noisy labels when present, clean labels otherwise.
    pub fn training_labels(&self) -> &[usize] {
        self.y_noisy.as_deref().unwrap_or(&self.y)
    }

    /// Rows `start..start + len`.
    pub fn rows(&self, start: usize, len: usize) -> Self {
        Self {
            k: self.k,
            x: self.x.rows(start, len).into_owned(),
            y: self.y[start..start + len].to_vec(),
            y_noisy: self.y_noisy.as_ref().map(|v| v[start..start + len].to_vec()),
        }
    }

    /// Consecutive pieces of the given sizes, which must sum to at most `n`.
    pub fn split(&self, sizes: &[usize]) -> Result<Vec<Self>> {
        let total: usize = sizes.iter().sum();
        if total > self.n() {
            return Err(Error::BadDimensions(format!("split sizes sum to {total} > {}", self.n())));
        }
        let mut start = 0;
        Ok(sizes
            .iter()
            .map(|&len| {
                let part = self.rows(start, len);
                start += len;
                part
            })
            .collect())
    }
}

/// Leaf label distributions of the decision-tree generator.
///
/// Features: `x1 = +1` w.p. 3/4 else `-1`; `x2 = +1` w.p. 3/4 else `-2`;
/// `x3 = +1` w.p. 1/4 else `-2`; `x4` uniform on `{1, 2, 3, 4}`; the rest
/// standard normal. Leaf index is `8 [x1 > 0] + 4 [x2 > 0] + 2 [x3 > 0] + [x4 > 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSpec {
    leaves: Vec<[f64; 4]>,
}

pub const TREE_LEAVES: usize = 16;
pub const TREE_LABELS: usize = 4;

impl Default for TreeSpec {
    /// Illustrative leaf distributions with varying concentration; they are not
    /// taken from any reference tree.
    fn default() -> Self {
        let leaves = (0..TREE_LEAVES)
            .map(|i| {
                let top = 0.95 - 0.5 * (i % 5) as f64 / 4.0;
                let mut p = [(1.0 - top) / 3.0; 4];
                p[i % 4] = top;
                p
            })
            .collect();
        Self { leaves }
    }
}

impl TreeSpec {
    pub fn new(leaves: Vec<[f64; 4]>) -> Result<Self> {
        if leaves.len() != TREE_LEAVES {
            return Err(Error::BadDimensions(format!("tree needs {TREE_LEAVES} leaves, got {}", leaves.len())));
        }
        for (row, p) in leaves.iter().enumerate() {
            let s: f64 = p.iter().sum();
            if p.iter().any(|x| !(0.0..=1.0).contains(x)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidProbabilities { row, reason: format!("leaf sums to {s}") });
            }
        }
        Ok(Self { leaves })
    }

    /// Parses leaves written as `p0 p1 p2 p3` separated by `;`.
    pub fn parse(text: &str) -> Result<Self> {
        let leaves = text
            .split(';')
            .map(|leaf| {
                let v: Vec<f64> = leaf
                    .split_whitespace()
                    .map(|x| x.parse::<f64>().map_err(|e| Error::Parse(format!("tree leaf value {x:?}: {e}"))))
                    .collect::<Result<_>>()?;
                <[f64; 4]>::try_from(v.as_slice())
                    .map_err(|_| Error::Parse(format!("tree leaf {leaf:?} needs {TREE_LABELS} values")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(leaves)
    }

    pub fn leaf(x: &[f64]) -> usize {
        8 * usize::from(x[0] > 0.0) + 4 * usize::from(x[1] > 0.0) + 2 * usize::from(x[2] > 0.0) + usize::from(x[3] > 2.0)
    }

    pub fn probabilities(&self, leaf: usize) -> &[f64; 4] {
        &self.leaves[leaf]
    }
}

impl fmt::Display for TreeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let leaves: Vec<String> =
            self.leaves.iter().map(|p| p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")).collect();
        write!(f, "{}", leaves.join(";"))
    }
}

/// Generative parameters sufficient to evaluate the exact posterior.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// Unit-variance clusters centred at `centers` (rows), cluster `c`
    /// belonging to class `cluster_class[c]`; only the first `centers.ncols()`
    /// features are informative.
    Hypercube { k: usize, d: usize, centers: DMatrix<f64>, cluster_class: Vec<usize> },
    /// `P[y = k | x]` proportional to `exp((x W)_k)`.
    Logistic { weights: DMatrix<f64> },
    Tree { spec: TreeSpec, d: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProbabilityModel {
    Oracle(Generator),
    /// Multinomial logistic regression, `softmax(x W + b)` with `W` of size `d x K`.
    Logistic { weights: DMatrix<f64>, bias: Vec<f64> },
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

/// Row-wise softmax of `logits` (`n x K`) into row-major probabilities.
fn softmax_rows(logits: &DMatrix<f64>) -> Vec<f64> {
    let k = logits.ncols();
    let mut out = Vec::with_capacity(logits.len());
    let mut row = vec![0.0; k];
    for i in 0..logits.nrows() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = logits[(i, c)];
        }
        softmax_in_place(&mut row);
        out.extend_from_slice(&row);
    }
    out
}

impl ProbabilityModel {
    pub fn k(&self) -> usize {
        match self {
            ProbabilityModel::Oracle(Generator::Hypercube { k, .. }) => *k,
            ProbabilityModel::Oracle(Generator::Logistic { weights }) => weights.ncols(),
            ProbabilityModel::Oracle(Generator::Tree { .. }) => TREE_LABELS,
            ProbabilityModel::Logistic { weights, .. } => weights.ncols(),
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<ClassProbabilities> {
        let k = self.k();
        let values = match self {
            ProbabilityModel::Oracle(Generator::Hypercube { centers, cluster_class, .. }) => {
                let m = centers.ncols();
                if x.ncols() < m {
                    return Err(Error::BadDimensions(format!("{} features, model needs {m}", x.ncols())));
                }
                let mut out = Vec::with_capacity(x.nrows() * k);
                let mut logd = vec![0.0; centers.nrows()];
                for i in 0..x.nrows() {
                    for (c, ld) in logd.iter_mut().enumerate() {
                        *ld = -0.5 * (0..m).map(|j| (x[(i, j)] - centers[(c, j)]).powi(2)).sum::<f64>();
                    }
                    let top = logd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut p = vec![0.0; k];
                    for (c, ld) in logd.iter().enumerate() {
                        p[cluster_class[c]] += (ld - top).exp();
                    }
                    let s: f64 = p.iter().sum();
                    out.extend(p.iter().map(|v| v / s));
                }
                out
            }
            ProbabilityModel::Oracle(Generator::Logistic { weights }) => {
                check_cols(x, weights.nrows())?;
                softmax_rows(&(x * weights))
            }
            ProbabilityModel::Oracle(Generator::Tree { spec, .. }) => {
                if x.ncols() < 4 {
                    return Err(Error::BadDimensions(format!("{} features, tree needs 4", x.ncols())));
                }
                (0..x.nrows())
                    .flat_map(|i| {
                        let f = [x[(i, 0)], x[(i, 1)], x[(i, 2)], x[(i, 3)]];
                        *spec.probabilities(TreeSpec::leaf(&f))
                    })
                    .collect()
            }
            ProbabilityModel::Logistic { weights, bias } => {
                check_cols(x, weights.nrows())?;
                let mut z = x * weights;
                for mut row in z.row_iter_mut() {
                    row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
                }
                softmax_rows(&z)
            }
        };
        ClassProbabilities::new(k, values)
    }
}

fn check_cols(x: &DMatrix<f64>, d: usize) -> Result<()> {
    if x.ncols() != d {
        return Err(Error::BadDimensions(format!("{} features, model needs {d}", x.ncols())));
    }
    Ok(())
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Draws one label per row of `probs`.
fn sample_labels<R: Rng + ?Sized>(probs: &ClassProbabilities, rng: &mut R) -> Vec<usize> {
    probs
        .rows()
        .map(|p| WeightedIndex::new(p).expect("valid probability row").sample(rng))
        .collect()
}

pub const DEFAULT_INFORMATIVE: usize = 25;

/// Probability that each discrete tree feature takes its positive value.
const TREE_POSITIVE: [f64; 3] = [0.75, 0.75, 0.25];
const TREE_NEGATIVE: [f64; 3] = [-1.0, -2.0, -2.0];

/// Sample size used to approximate label frequencies without a closed form.
const RHO_MC_SAMPLES: usize = 200_000;

impl Generator {
    /// `2K` unit-variance Gaussian clusters centred at distinct random
    /// vertices of `{-1, 1}^n_informative`, two per class. The remaining
    /// `d - n_informative` features are independent standard normal noise.
    pub fn hypercube(k: usize, d: usize, n_informative: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewLabels(k));
        }
        let clusters = 2 * k;
        if n_informative == 0 || d < n_informative {
            return Err(Error::BadDimensions(format!("d = {d} needs at least n_informative = {n_informative} > 0")));
        }
        if n_informative < 64 && (1u64 << n_informative) < clusters as u64 {
            return Err(Error::BadDimensions(format!(
                "{n_informative} informative dimensions cannot hold {clusters} vertices"
            )));
        }
        let mut rng = seed::stream(seed, 0, "hypercube-centers");
        let mut vertices: Vec<Vec<f64>> = Vec::with_capacity(clusters);
        while vertices.len() < clusters {
            let v: Vec<f64> = (0..n_informative).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            if !vertices.contains(&v) {
                vertices.push(v);
            }
        }
        let centers = DMatrix::from_fn(clusters, n_informative, |c, j| vertices[c][j]);
        let mut cluster_class: Vec<usize> = (0..clusters).map(|c| c % k).collect();
        cluster_class.shuffle(&mut rng);
        Ok(Generator::Hypercube { k, d, centers, cluster_class })
    }

    /// Multinomial logistic labels with standard normal `d x K` weights.
    pub fn logistic(k: usize, d: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewLabels(k));
        }
        Ok(Generator::Logistic { weights: gaussian_matrix(d, k, &mut seed::stream(seed, 0, "logistic-weights")) })
    }

    pub fn tree(spec: TreeSpec, d: usize) -> Result<Self> {
        if d < 4 {
            return Err(Error::BadDimensions(format!("tree data needs d >= 4, got {d}")));
        }
        Ok(Generator::Tree { spec, d })
    }

    pub fn k(&self) -> usize {
        match self {
            Generator::Hypercube { k, .. } => *k,
            Generator::Logistic { weights } => weights.ncols(),
            Generator::Tree { .. } => TREE_LABELS,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Generator::Hypercube { d, .. } | Generator::Tree { d, .. } => *d,
            Generator::Logistic { weights } => weights.nrows(),
        }
    }

    pub fn oracle(&self) -> ProbabilityModel {
        ProbabilityModel::Oracle(self.clone())
    }

    /// Draws `n` labeled points. Hypercube samples are split as evenly as
    /// possible across clusters and then shuffled.
    pub fn sample(&self, n: usize, seed: u64) -> Result<LabeledDataset> {
        let d = self.d();
        match self {
            Generator::Hypercube { k, centers, cluster_class, .. } => {
                let mut rng = seed::stream(seed, 0, "hypercube-samples");
                let clusters = centers.nrows();
                let mut assignment: Vec<usize> = (0..n).map(|i| i % clusters).collect();
                assignment.shuffle(&mut rng);
                let mut x = gaussian_matrix(n, d, &mut rng);
                for (i, &c) in assignment.iter().enumerate() {
                    for j in 0..centers.ncols() {
                        x[(i, j)] += centers[(c, j)];
                    }
                }
                let y = assignment.iter().map(|&c| cluster_class[c]).collect();
                LabeledDataset::new(*k, x, y)
            }
            Generator::Logistic { .. } => {
                let mut rng = seed::stream(seed, 0, "logistic-samples");
                let x = gaussian_matrix(n, d, &mut rng);
                let y = sample_labels(&self.oracle().predict(&x)?, &mut rng);
                LabeledDataset::new(self.k(), x, y)
            }
            Generator::Tree { .. } => {
                let mut rng = seed::stream(seed, 0, "tree-samples");
                let mut x = gaussian_matrix(n, d, &mut rng);
                for i in 0..n {
                    for j in 0..3 {
                        x[(i, j)] = if rng.gen::<f64>() < TREE_POSITIVE[j] { 1.0 } else { TREE_NEGATIVE[j] };
                    }
                    x[(i, 3)] = rng.gen_range(1..=4) as f64;
                }
                let y = sample_labels(&self.oracle().predict(&x)?, &mut rng);
                LabeledDataset::new(TREE_LABELS, x, y)
            }
        }
    }

    /// Clean label frequencies. Exact for the hypercube and tree generators;
    /// for the logistic generator the mean posterior over a fixed sample of
    /// features.
    pub fn rho(&self) -> Result<Vec<f64>> {
        let k = self.k();
        match self {
            Generator::Hypercube { .. } => Ok(vec![1.0 / k as f64; k]),
            Generator::Tree { spec, .. } => {
                let mut rho = vec![0.0; k];
                for leaf in 0..TREE_LEAVES {
                    let mut w = 0.5;
                    for j in 0..3 {
                        let positive = leaf >> (3 - j) & 1 == 1;
                        w *= if positive { TREE_POSITIVE[j] } else { 1.0 - TREE_POSITIVE[j] };
                    }
                    for (r, p) in rho.iter_mut().zip(spec.probabilities(leaf)) {
                        *r += w * p;
                    }
                }
                Ok(rho)
            }
            Generator::Logistic { .. } => {
                let x = gaussian_matrix(RHO_MC_SAMPLES, self.d(), &mut seed::stream(0, 0, "rho-features"));
                let p = self.oracle().predict(&x)?;
                let mut rho = vec![0.0; k];
                for row in p.rows() {
                    rho.iter_mut().zip(row).for_each(|(r, v)| *r += v);
                }
                let n = p.n() as f64;
                Ok(rho.into_iter().map(|r| r / n).collect())
            }
        }
    }
}

/// Hypercube mixture sample with `n_informative` informative features, together
/// with its oracle posterior.
pub fn gen_hypercube_mixture(
    n: usize,
    k: usize,
    d: usize,
    n_informative: usize,
    seed: u64,
) -> Result<(LabeledDataset, ProbabilityModel)> {
    let g = Generator::hypercube(k, d, n_informative, seed)?;
    Ok((g.sample(n, seed)?, g.oracle()))
}

/// Standard Gaussian features and `P[y = k | x]` proportional to
/// `exp((x W)_k)` with `W` standard normal.
pub fn gen_logistic(n: usize, k: usize, d: usize, seed: u64) -> Result<(LabeledDataset, ProbabilityModel)> {
    let g = Generator::logistic(k, d, seed)?;
    Ok((g.sample(n, seed)?, g.oracle()))
}

/// As [`gen_logistic`] with a given `d x K` weight matrix.
pub fn gen_logistic_with_weights(
    n: usize,
    weights: DMatrix<f64>,
    seed: u64,
) -> Result<(LabeledDataset, ProbabilityModel)> {
    let g = Generator::Logistic { weights };
    Ok((g.sample(n, seed)?, g.oracle()))
}

/// Decision-tree data over four discrete features plus `d - 4` Gaussian ones.
pub fn gen_tree(n: usize, d: usize, spec: TreeSpec, seed: u64) -> Result<(LabeledDataset, ProbabilityModel)> {
    let g = Generator::tree(spec, d)?;
    Ok((g.sample(n, seed)?, g.oracle()))
}

/// Mean cross-entropy of `softmax(x W + b)` against `y` with its gradients
/// with respect to `W` and `b`.
pub fn loss_and_gradient(
    x: &DMatrix<f64>,
    y: &[usize],
    weights: &DMatrix<f64>,
    bias: &[f64],
) -> (f64, DMatrix<f64>, Vec<f64>) {
    let n = x.nrows();
    let k = weights.ncols();
    let mut z = x * weights;
    let mut loss = 0.0;
    let mut row = vec![0.0; k];
    for i in 0..n {
        for c in 0..k {
            row[c] = z[(i, c)] + bias[c];
        }
        softmax_in_place(&mut row);
        loss -= row[y[i]].max(f64::MIN_POSITIVE).ln();
        for c in 0..k {
            z[(i, c)] = row[c] - f64::from(u8::from(c == y[i]));
        }
    }
    let scale = 1.0 / n as f64;
    let grad_w = x.transpose() * &z * scale;
    let grad_b = (0..k).map(|c| z.column(c).sum() * scale).collect();
    (loss * scale, grad_w, grad_b)
}

pub const DEFAULT_BATCH: usize = 128;

/// Multinomial logistic regression fitted by mini-batch gradient descent on
/// the training labels (noisy when present), starting from zero weights.
/// Batches are reshuffled each epoch from `seed`.
pub fn train_logistic(train: &LabeledDataset, epochs: usize, lr: f64, seed: u64) -> Result<ProbabilityModel> {
    if train.n() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let (d, k) = (train.d(), train.k());
    let labels = train.training_labels();
    let mut weights = DMatrix::zeros(d, k);
    let mut bias = vec![0.0; k];
    let mut order: Vec<usize> = (0..train.n()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_seed(seed, 0, "train-logistic"));
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(DEFAULT_BATCH) {
            let xb = train.x().select_rows(batch.iter());
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (_, gw, gb) = loss_and_gradient(&xb, &yb, &weights, &bias);
            weights -= gw * lr;
            bias.iter_mut().zip(&gb).for_each(|(b, g)| *b -= lr * g);
        }
    }
    Ok(ProbabilityModel::Logistic { weights, bias })
}
