use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use noisecp::calibration::{empirical_frequencies, CTable, NoiseRegion, DEFAULT_REPS, DEFAULT_SEED};
use noisecp::contamination::{clean_frequencies_from_transition, uniform, ContaminationModel};
use noisecp::estimation::{fit_general, fit_rr, fit_two_level_rr, FitData};
use noisecp::harness::config::{parse_matrix, NoiseKind, ScoreChoice};
use noisecp::harness::io::{ingest_scores, parse_thresholds, write_sets, write_thresholds, IngestOptions, IngestedValues};
use noisecp::harness::{calibrate, evaluate, metrics_csv, run_experiment, CalibrationInputs, ExperimentConfig, Method};
use noisecp::scores::{ScoreKind, ScoreMatrix};
use noisecp::{seed, Error, Result};

#[derive(Parser)]
#[command(name = "noisecp", version, about = "Conformal classification under random label contamination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded experiment from a key=value config and print metrics.
    Simulate(SimulateArgs),
    /// Calibrate thresholds from a score file with noisy labels.
    Calibrate(CalibrateArgs),
    /// Build prediction sets from thresholds and a score file.
    Predict(PredictArgs),
    /// Fit the contamination model from a clean and a noisy score file.
    FitNoise(FitNoiseArgs),
    /// Print Monte Carlo values of c(n).
    Ctable(CtableArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Config file; `-` starts from the defaults.
    config: PathBuf,
    /// Override one config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Metrics destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved config to stderr before running.
    #[arg(long)]
    show_config: bool,
}

#[derive(Args)]
struct ScoreFileArgs {
    /// Score file with header id,y_noisy,y_true,p0,... (or s0,... with --scores).
    input: PathBuf,
    /// The file holds conformity scores rather than probabilities.
    #[arg(long)]
    scores: bool,
    /// Rescale probability rows that do not sum to one.
    #[arg(long)]
    renormalize: bool,
    /// Score function applied to probabilities.
    #[arg(long, default_value = "hps")]
    score: ScoreChoice,
    #[arg(long, default_value_t = 1e-6)]
    jitter: f64,
    /// Seed for jitter and randomized scores.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct NoiseArgs {
    /// Contamination family.
    #[arg(long, default_value = "rr")]
    noise: NoiseKind,
    #[arg(long, conflicts_with = "mismatch_rate")]
    epsilon: Option<f64>,
    /// Randomized-response strength matched to an observed label mismatch
    /// rate: epsilon = rate * K / (K - 1). No coverage guarantee follows.
    #[arg(long)]
    mismatch_rate: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    nu: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Transition matrix T[(noisy, clean)] for --noise transition.
    #[arg(long)]
    transition_file: Option<PathBuf>,
    /// Inverse mixture matrix V, e.g. written by `fit-noise --v-out`.
    #[arg(long, conflicts_with_all = ["epsilon", "mismatch_rate", "transition_file"])]
    v_file: Option<PathBuf>,
    /// Clean label frequencies; solved from the noisy frequencies when absent.
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    #[arg(long, requires = "epsilon_upp")]
    epsilon_low: Option<f64>,
    #[arg(long, requires = "epsilon_low")]
    epsilon_upp: Option<f64>,
    #[arg(long, requires = "nu_upp")]
    nu_low: Option<f64>,
    #[arg(long, requires = "nu_low")]
    nu_upp: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    eps_bar: f64,
    #[arg(long, default_value_t = 0.01)]
    alpha_v: f64,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    file: ScoreFileArgs,
    #[arg(long, default_value = "adaptive+")]
    method: Method,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    ctable_reps: usize,
    /// Threshold table destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    file: ScoreFileArgs,
    /// Threshold table written by `calibrate`.
    #[arg(long)]
    thresholds: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitModel {
    Rr,
    TwoLevel,
    General,
}

#[derive(Args)]
struct FitNoiseArgs {
    /// Probability file whose y_true column holds clean labels.
    #[arg(long)]
    clean: PathBuf,
    /// Probability file whose y_noisy column holds contaminated labels.
    #[arg(long)]
    noisy: PathBuf,
    #[arg(long, value_enum, default_value = "rr")]
    model: FitModel,
    #[arg(long, default_value_t = 0.01)]
    alpha_v: f64,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.5)]
    eps_bar: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    renormalize: bool,
    /// Write the estimated V as K lines of K numbers.
    #[arg(long)]
    v_out: Option<PathBuf>,
}

#[derive(Args)]
struct CtableArgs {
    /// Calibration group sizes.
    #[arg(required = true, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut config = if a.config.as_os_str() == "-" {
        ExperimentConfig::default()
    } else {
        ExperimentConfig::parse(&fs::read_to_string(&a.config)?)?
    };
    for o in &a.overrides {
        let (key, value) = o.split_once('=').ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got {o:?}")))?;
        config.set(key.trim(), value.trim())?;
    }
    config.validate()?;
    if a.show_config {
        eprint!("{config}");
    }
    let reports = run_experiment(&config)?;
    emit(a.out.as_deref(), &metrics_csv(&reports))?;
    for m in &config.methods {
        let rs: Vec<_> = reports.iter().filter(|r| r.method == m.name()).collect();
        let n = rs.len() as f64;
        let cov = rs.iter().map(|r| r.coverage).sum::<f64>() / n;
        let size = rs.iter().map(|r| r.avg_size).sum::<f64>() / n;
        let worst = rs
            .iter()
            .map(|r| r.label_coverage.iter().copied().filter(|c| !c.is_nan()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / n;
        eprintln!("{:<16} coverage={cov:.4} min_label_coverage={worst:.4} avg_size={size:.4}", m.name());
    }
    Ok(())
}

fn score_kind(choice: ScoreChoice) -> ScoreKind {
    match choice {
        ScoreChoice::Hps => ScoreKind::Hps,
        ScoreChoice::Aps => ScoreKind::Aps { randomized: false },
        ScoreChoice::ApsRandomized => ScoreKind::Aps { randomized: true },
    }
}

fn load_scores(a: &ScoreFileArgs) -> Result<(noisecp::harness::io::Ingested, ScoreMatrix)> {
    let data = ingest_scores(&a.input, IngestOptions { scores: a.scores, renormalize: a.renormalize })?;
    let mut rng = seed::stream(a.seed, 0, "scores");
    let scores = data.score_matrix(score_kind(a.score), a.jitter, &mut rng);
    Ok((data, scores))
}

fn xi(epsilon: f64) -> f64 {
    epsilon / (1.0 - epsilon)
}

fn noise_model(a: &NoiseArgs, k: usize, rho_tilde: &[f64]) -> Result<Option<ContaminationModel>> {
    let epsilon = match (a.epsilon, a.mismatch_rate) {
        (Some(e), _) => Some(e),
        (None, Some(rate)) => {
            if a.noise != NoiseKind::Rr {
                return Err(Error::Config("--mismatch-rate applies to --noise rr".into()));
            }
            Some(rate * k as f64 / (k as f64 - 1.0))
        }
        (None, None) => None,
    };
    let transition = match (a.noise, &a.transition_file) {
        (NoiseKind::Transition, Some(p)) => Some(parse_matrix(&fs::read_to_string(p)?, k)?),
        (NoiseKind::Transition, None) => return Err(Error::Config("--noise transition needs --transition-file".into())),
        _ => None,
    };
    let shape = |eps: f64| -> Result<ContaminationModel> {
        let u = uniform(k);
        Ok(match a.noise {
            NoiseKind::Rr => ContaminationModel::build_rr(k, eps, &u)?,
            NoiseKind::TwoLevel => ContaminationModel::build_two_level_rr(k, eps, a.nu)?,
            NoiseKind::Block => ContaminationModel::block_diagonal(k, eps, &u)?,
            NoiseKind::Random => ContaminationModel::random_u(k, eps, a.noise_seed, &u)?,
            NoiseKind::Transition => unreachable!("handled by the transition branch"),
        })
    };
    let t = match (transition, epsilon) {
        (Some(t), _) => t,
        (None, Some(eps)) => shape(eps)?.transition().clone(),
        (None, None) => return Ok(None),
    };
    let rho = match &a.rho {
        Some(r) => r.clone(),
        None => clean_frequencies_from_transition(&t, rho_tilde)?,
    };
    if rho.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: rho.len() });
    }
    if a.noise == NoiseKind::TwoLevel && a.transition_file.is_none() {
        // The two-level family fixes uniform clean frequencies.
        return Ok(Some(shape(epsilon.expect("epsilon given"))?));
    }
    ContaminationModel::build_from_transition(t, &rho).map(Some)
}

fn run_calibrate(a: &CalibrateArgs) -> Result<()> {
    let (data, scores) = load_scores(&a.file)?;
    let k = data.k();
    let rho_tilde = empirical_frequencies(&data.y_noisy, k);
    let model = noise_model(&a.noise, k, &rho_tilde)?;
    let v = match (&a.noise.v_file, &model) {
        (Some(p), _) => Some(parse_matrix(&fs::read_to_string(p)?, k)?),
        (None, Some(m)) => Some(m.inverse().clone()),
        (None, None) => None,
    };
    let n = &a.noise;
    let region = match (n.epsilon_low, n.epsilon_upp, &v) {
        (Some(lo), Some(up), _) if n.noise == NoiseKind::TwoLevel => {
            let nu = n.nu_low.zip(n.nu_upp).ok_or_else(|| Error::Config("two-level interval needs --nu-low and --nu-upp".into()))?;
            Some(NoiseRegion::from_two_level_interval(k, (xi(lo), xi(up)), nu, xi(n.eps_bar), n.alpha_v)?)
        }
        (Some(lo), Some(up), _) => Some(NoiseRegion::from_rr_interval(xi(lo), xi(up), xi(n.eps_bar), &rho_tilde, n.alpha_v)?),
        (_, _, Some(v)) => Some(NoiseRegion::degenerate(v)?),
        _ => None,
    };
    let ctable = CTable::new(a.ctable_reps, DEFAULT_SEED);
    let inputs = CalibrationInputs {
        v: v.as_ref(),
        region: region.as_ref(),
        rho_tilde: Some(&rho_tilde),
        alpha: a.alpha,
        gamma: a.gamma,
        ctable: &ctable,
    };
    let c = calibrate(a.method, &scores, &data.y_noisy, &inputs)?;
    emit(a.out.as_deref(), &write_thresholds(&c.thresholds, a.method.name(), a.alpha, &c.delta))
}

fn run_predict(a: &PredictArgs) -> Result<()> {
    let tau = parse_thresholds(&fs::read_to_string(&a.thresholds)?)?;
    let (data, scores) = load_scores(&a.file)?;
    if tau.k() != data.k() {
        return Err(Error::DimensionMismatch { expected: data.k(), got: tau.k() });
    }
    let sets = scores.prediction_sets(&tau)?;
    emit(a.out.as_deref(), &write_sets(&data.ids, &sets))?;
    if let Some(y) = data.clean_labels() {
        let r = evaluate(&sets, &y, data.k())?;
        eprintln!("coverage={:.4} avg_size={:.4}", r.coverage, r.avg_size);
    }
    Ok(())
}

fn run_fit(a: &FitNoiseArgs) -> Result<()> {
    let opts = IngestOptions { scores: false, renormalize: a.renormalize };
    let clean = ingest_scores(&a.clean, opts)?;
    let noisy = ingest_scores(&a.noisy, opts)?;
    let (IngestedValues::Probabilities(cp), IngestedValues::Probabilities(np)) = (&clean.values, &noisy.values) else {
        unreachable!("probability files")
    };
    let y = clean.clean_labels().ok_or_else(|| Error::Config("every row of the clean file needs y_true".into()))?;
    let data = FitData::from_probabilities((cp, &y), (np, &noisy.y_noisy))?;
    let mut rng = seed::stream(a.seed, 0, "fit");
    let fit = match a.model {
        FitModel::Rr => fit_rr(&data, a.alpha_v, a.bootstrap, a.eps_bar, &mut rng)?,
        FitModel::TwoLevel => fit_two_level_rr(&data, a.alpha_v, a.bootstrap, a.eps_bar, &mut rng)?,
        FitModel::General => fit_general(&data, a.alpha_v, a.bootstrap, &mut rng)?,
    };
    print!("{fit}");
    if let Some(p) = &a.v_out {
        let v = &fit.v_hat;
        let text: String = (0..v.nrows())
            .map(|r| (0..v.ncols()).map(|c| v[(r, c)].to_string()).collect::<Vec<_>>().join(" ") + "\n")
            .collect();
        fs::write(p, text)?;
    }
    Ok(())
}

fn run_ctable(a: &CtableArgs) -> Result<()> {
    let table = CTable::new(a.reps, a.seed);
    let mut out = String::from("n,c\n");
    for &n in &a.n {
        out.push_str(&format!("{n},{}\n", table.get(n)));
    }
    emit(None, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Calibrate(a) => run_calibrate(a),
        Command::Predict(a) => run_predict(a),
        Command::FitNoise(a) => run_fit(a),
        Command::Ctable(a) => run_ctable(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
