//! Flat `key=value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored; unknown keys are
//! errors. Keys and defaults:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `generator` | `hypercube` | `hypercube`, `logistic` or `tree` |
//! | `k` | `4` | number of labels (the tree generator requires 4) |
//! | `d` | `50` | number of features |
//! | `n_informative` | `25` | informative hypercube dimensions |
//! | `tree_leaves` | built-in | 16 leaf distributions, `p0 p1 p2 p3` separated by `;` |
//! | `rho` | from generator | clean label frequencies, comma separated |
//! | `n_train` | `0` | training points for `classifier=logistic` |
//! | `n_cal` | `5000` | calibration points |
//! | `n_test` | `2000` | test points |
//! | `classifier` | `oracle` | `oracle` or `logistic` |
//! | `epochs` | `20` | logistic training epochs |
//! | `learning_rate` | `0.1` | logistic step size |
//! | `score` | `hps` | `hps`, `aps` or `aps-randomized` |
//! | `jitter` | `1e-6` | uniform jitter added to `hps` scores |
//! | `noise` | `rr` | `rr`, `two-level`, `block`, `random` or `transition` |
//! | `epsilon` | `0.1` | contamination strength |
//! | `nu` | `0` | two-level block parameter |
//! | `noise_seed` | `0` | seed of the `random` transition matrix |
//! | `transition_file` | none | `K` lines of `K` numbers, `T[(noisy, clean)]` |
//! | `noise_model` | `known` | `known`, `interval`, `fit-rr`, `fit-two-level` or `fit-general` |
//! | `epsilon_low`, `epsilon_upp` | none | randomized-response interval for `noise_model=interval` |
//! | `nu_low`, `nu_upp` | none | two-level interval for `noise_model=interval` |
//! | `eps_bar` | `0.5` | a-priori upper bound on `epsilon` |
//! | `n_clean` | `1000` | clean points for fitting the noise model |
//! | `n_fit` | `10000` | noisy points for fitting the noise model |
//! | `bootstrap` | `1000` | bootstrap replicates |
//! | `methods` | `standard-lc,adaptive+` | comma-separated calibration methods |
//! | `alpha` | `0.1` | miscoverage level |
//! | `alpha_v` | `0.01` | noise-region level |
//! | `gamma` | `0.1` | calibration-conditional level |
//! | `ctable_reps` | `10000` | Monte Carlo replicates per `c(n)` |
//! | `reps` | `25` | repetitions |
//! | `seed` | `0` | master seed |

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::methods::Method;
use crate::error::{Error, Result};
use crate::synth::TreeSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Hypercube,
    Logistic,
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Oracle,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreChoice {
    Hps,
    Aps,
    ApsRandomized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Rr,
    TwoLevel,
    Block,
    Random,
    Transition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseModelChoice {
    Known,
    Interval,
    FitRr,
    FitTwoLevel,
    FitGeneral,
}

macro_rules! keyword_enum {
    ($t:ty, $($name:literal => $v:expr),+ $(,)?) => {
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($v),)+
                    _ => Err(Error::Config(format!("unknown {} {s:?}", stringify!($t)))),
                }
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $v { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(GeneratorKind, "hypercube" => GeneratorKind::Hypercube, "logistic" => GeneratorKind::Logistic, "tree" => GeneratorKind::Tree);
keyword_enum!(ClassifierKind, "oracle" => ClassifierKind::Oracle, "logistic" => ClassifierKind::Logistic);
keyword_enum!(ScoreChoice, "hps" => ScoreChoice::Hps, "aps" => ScoreChoice::Aps, "aps-randomized" => ScoreChoice::ApsRandomized);
keyword_enum!(
    NoiseKind,
    "rr" => NoiseKind::Rr,
    "two-level" => NoiseKind::TwoLevel,
    "block" => NoiseKind::Block,
    "random" => NoiseKind::Random,
    "transition" => NoiseKind::Transition,
);
keyword_enum!(
    NoiseModelChoice,
    "known" => NoiseModelChoice::Known,
    "interval" => NoiseModelChoice::Interval,
    "fit-rr" => NoiseModelChoice::FitRr,
    "fit-two-level" => NoiseModelChoice::FitTwoLevel,
    "fit-general" => NoiseModelChoice::FitGeneral,
);

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub generator: GeneratorKind,
    pub k: usize,
    pub d: usize,
    pub n_informative: usize,
    pub tree_leaves: Option<TreeSpec>,
    pub rho: Option<Vec<f64>>,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub classifier: ClassifierKind,
    pub epochs: usize,
    pub learning_rate: f64,
    pub score: ScoreChoice,
    pub jitter: f64,
    pub noise: NoiseKind,
    pub epsilon: f64,
    pub nu: f64,
    pub noise_seed: u64,
    pub transition_file: Option<PathBuf>,
    pub noise_model: NoiseModelChoice,
    pub epsilon_low: Option<f64>,
    pub epsilon_upp: Option<f64>,
    pub nu_low: Option<f64>,
    pub nu_upp: Option<f64>,
    pub eps_bar: f64,
    pub n_clean: usize,
    pub n_fit: usize,
    pub bootstrap: usize,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub alpha_v: f64,
    pub gamma: f64,
    pub ctable_reps: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorKind::Hypercube,
            k: 4,
            d: 50,
            n_informative: 25,
            tree_leaves: None,
            rho: None,
            n_train: 0,
            n_cal: 5000,
            n_test: 2000,
            classifier: ClassifierKind::Oracle,
            epochs: 20,
            learning_rate: 0.1,
            score: ScoreChoice::Hps,
            jitter: crate::scores::DEFAULT_JITTER,
            noise: NoiseKind::Rr,
            epsilon: 0.1,
            nu: 0.0,
            noise_seed: 0,
            transition_file: None,
            noise_model: NoiseModelChoice::Known,
            epsilon_low: None,
            epsilon_upp: None,
            nu_low: None,
            nu_upp: None,
            eps_bar: 0.5,
            n_clean: 1000,
            n_fit: 10_000,
            bootstrap: 1000,
            methods: vec![Method::StandardLc, Method::AdaptivePlus],
            alpha: 0.1,
            alpha_v: 0.01,
            gamma: 0.1,
            ctable_reps: crate::calibration::DEFAULT_REPS,
            reps: 25,
            seed: 0,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::Config(format!("{key}: {value:?}: {e}")))
}

fn parse_opt(key: &str, value: &str) -> Result<Option<f64>> {
    if value.is_empty() {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn unit_open(key: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Config(format!("{key} = {x} must lie in (0, 1)")));
    }
    Ok(())
}

fn positive(key: &str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config(format!("{key} must be positive")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            c.set(key.trim(), value.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "generator" => self.generator = v.parse()?,
            "k" => self.k = parse_num(key, v)?,
            "d" => self.d = parse_num(key, v)?,
            "n_informative" => self.n_informative = parse_num(key, v)?,
            "tree_leaves" => self.tree_leaves = if v.is_empty() { None } else { Some(TreeSpec::parse(v)?) },
            "rho" => {
                self.rho = if v.is_empty() {
                    None
                } else {
                    Some(v.split(',').map(|x| parse_num(key, x.trim())).collect::<Result<_>>()?)
                }
            }
            "n_train" => self.n_train = parse_num(key, v)?,
            "n_cal" => self.n_cal = parse_num(key, v)?,
            "n_test" => self.n_test = parse_num(key, v)?,
            "classifier" => self.classifier = v.parse()?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "learning_rate" => self.learning_rate = parse_num(key, v)?,
            "score" => self.score = v.parse()?,
            "jitter" => self.jitter = parse_num(key, v)?,
            "noise" => self.noise = v.parse()?,
            "epsilon" => self.epsilon = parse_num(key, v)?,
            "nu" => self.nu = parse_num(key, v)?,
            "noise_seed" => self.noise_seed = parse_num(key, v)?,
            "transition_file" => self.transition_file = (!v.is_empty()).then(|| PathBuf::from(v)),
            "noise_model" => self.noise_model = v.parse()?,
            "epsilon_low" => self.epsilon_low = parse_opt(key, v)?,
            "epsilon_upp" => self.epsilon_upp = parse_opt(key, v)?,
            "nu_low" => self.nu_low = parse_opt(key, v)?,
            "nu_upp" => self.nu_upp = parse_opt(key, v)?,
            "eps_bar" => self.eps_bar = parse_num(key, v)?,
            "n_clean" => self.n_clean = parse_num(key, v)?,
            "n_fit" => self.n_fit = parse_num(key, v)?,
            "bootstrap" => self.bootstrap = parse_num(key, v)?,
            "methods" => {
                self.methods = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_>>()?
            }
            "alpha" => self.alpha = parse_num(key, v)?,
            "alpha_v" => self.alpha_v = parse_num(key, v)?,
            "gamma" => self.gamma = parse_num(key, v)?,
            "ctable_reps" => self.ctable_reps = parse_num(key, v)?,
            "reps" => self.reps = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::TooFewLabels(self.k));
        }
        positive("d", self.d)?;
        positive("n_cal", self.n_cal)?;
        positive("n_test", self.n_test)?;
        positive("reps", self.reps)?;
        positive("ctable_reps", self.ctable_reps)?;
        if self.classifier == ClassifierKind::Logistic {
            positive("n_train", self.n_train)?;
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        unit_open("alpha", self.alpha)?;
        unit_open("alpha_v", self.alpha_v)?;
        unit_open("gamma", self.gamma)?;
        unit_open("eps_bar", self.eps_bar)?;
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::EpsilonOutOfRange(self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.nu) {
            return Err(Error::NuOutOfRange(self.nu));
        }
        if self.generator == GeneratorKind::Tree && self.k != crate::synth::TREE_LABELS {
            return Err(Error::Config(format!("the tree generator has {} labels", crate::synth::TREE_LABELS)));
        }
        if self.noise == NoiseKind::Transition && self.transition_file.is_none() {
            return Err(Error::Config("noise=transition needs transition_file".into()));
        }
        if let Some(rho) = &self.rho {
            if rho.len() != self.k {
                return Err(Error::DimensionMismatch { expected: self.k, got: rho.len() });
            }
        }
        match self.noise_model {
            NoiseModelChoice::Interval => {
                if self.epsilon_low.is_none() || self.epsilon_upp.is_none() {
                    return Err(Error::Config("noise_model=interval needs epsilon_low and epsilon_upp".into()));
                }
                if self.noise == NoiseKind::TwoLevel && (self.nu_low.is_none() || self.nu_upp.is_none()) {
                    return Err(Error::Config("two-level intervals need nu_low and nu_upp".into()));
                }
            }
            NoiseModelChoice::FitRr | NoiseModelChoice::FitTwoLevel | NoiseModelChoice::FitGeneral => {
                positive("n_clean", self.n_clean)?;
                positive("n_fit", self.n_fit)?;
                positive("bootstrap", self.bootstrap)?;
            }
            NoiseModelChoice::Known => {}
        }
        Ok(())
    }

    /// Reads `transition_file` as `K` lines of `K` numbers separated by
    /// commas or whitespace.
    pub fn read_transition(&self) -> Result<Option<DMatrix<f64>>> {
        let Some(path) = &self.transition_file else { return Ok(None) };
        let text = std::fs::read_to_string(path)?;
        parse_matrix(&text, self.k).map(Some)
    }
}

pub fn parse_matrix(text: &str, k: usize) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("matrix entry {s:?}: {e}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        return Err(Error::BadDimensions(format!("expected a {k}x{k} matrix")));
    }
    Ok(DMatrix::from_fn(k, k, |a, b| rows[a][b]))
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        let rho = self.rho.as_ref().map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        writeln!(f, "generator={}", self.generator)?;
        writeln!(f, "k={}", self.k)?;
        writeln!(f, "d={}", self.d)?;
        writeln!(f, "n_informative={}", self.n_informative)?;
        writeln!(f, "tree_leaves={}", self.tree_leaves.as_ref().map(|t| t.to_string()).unwrap_or_default())?;
        writeln!(f, "rho={}", rho.unwrap_or_default())?;
        writeln!(f, "n_train={}", self.n_train)?;
        writeln!(f, "n_cal={}", self.n_cal)?;
        writeln!(f, "n_test={}", self.n_test)?;
        writeln!(f, "classifier={}", self.classifier)?;
        writeln!(f, "epochs={}", self.epochs)?;
        writeln!(f, "learning_rate={}", self.learning_rate)?;
        writeln!(f, "score={}", self.score)?;
        writeln!(f, "jitter={}", self.jitter)?;
        writeln!(f, "noise={}", self.noise)?;
        writeln!(f, "epsilon={}", self.epsilon)?;
        writeln!(f, "nu={}", self.nu)?;
        writeln!(f, "noise_seed={}", self.noise_seed)?;
        writeln!(
            f,
            "transition_file={}",
            self.transition_file.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
        )?;
        writeln!(f, "noise_model={}", self.noise_model)?;
        writeln!(f, "epsilon_low={}", fmt_opt(self.epsilon_low))?;
        writeln!(f, "epsilon_upp={}", fmt_opt(self.epsilon_upp))?;
        writeln!(f, "nu_low={}", fmt_opt(self.nu_low))?;
        writeln!(f, "nu_upp={}", fmt_opt(self.nu_upp))?;
        writeln!(f, "eps_bar={}", self.eps_bar)?;
        writeln!(f, "n_clean={}", self.n_clean)?;
        writeln!(f, "n_fit={}", self.n_fit)?;
        writeln!(f, "bootstrap={}", self.bootstrap)?;
        writeln!(f, "methods={}", methods.join(","))?;
        writeln!(f, "alpha={}", self.alpha)?;
        writeln!(f, "alpha_v={}", self.alpha_v)?;
        writeln!(f, "gamma={}", self.gamma)?;
        writeln!(f, "ctable_reps={}", self.ctable_reps)?;
        writeln!(f, "reps={}", self.reps)?;
        writeln!(f, "seed={}", self.seed)
    }
}
