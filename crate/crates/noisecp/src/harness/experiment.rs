//! Seeded Monte Carlo experiments: generate, corrupt, train, score,
//! calibrate and evaluate.
//!
//! Repetition `r` draws all of its randomness from streams
//! `seed::stream(config.seed, r, stage)` with stages `data`, `noise`, `train`,
//! `scores` and `fit`. The data distribution itself (hypercube centres,
//! logistic weights) comes from stage `distribution` at index 0 and is shared
//! by all repetitions.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::{ClassifierKind, ExperimentConfig, GeneratorKind, NoiseKind, NoiseModelChoice, ScoreChoice};
use super::methods::{calibrate, CalibrationInputs};
use super::report::{evaluate, CoverageReport};
use crate::calibration::{CTable, NoiseRegion, DEFAULT_SEED};
use crate::contamination::ContaminationModel;
use crate::error::{Error, Result};
use crate::estimation::{fit_general, fit_rr, fit_two_level_rr, FitData};
use crate::scores::{aps_scores, hps_scores, ClassProbabilities, ScoreMatrix};
use crate::seed;
use crate::synth::{train_logistic, Generator, ProbabilityModel};

/// State shared by all repetitions.
#[derive(Debug)]
pub struct Setup {
    pub generator: Generator,
    pub model: ContaminationModel,
    pub ctable: CTable,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let dseed = seed::derive_seed(config.seed, 0, "distribution");
        let generator = match config.generator {
            GeneratorKind::Hypercube => Generator::hypercube(config.k, config.d, config.n_informative, dseed)?,
            GeneratorKind::Logistic => Generator::logistic(config.k, config.d, dseed)?,
            GeneratorKind::Tree => Generator::tree(config.tree_leaves.clone().unwrap_or_default(), config.d)?,
        };
        let rho = match &config.rho {
            Some(r) => r.clone(),
            None => generator.rho()?,
        };
        let (k, eps) = (config.k, config.epsilon);
        let model = match config.noise {
            NoiseKind::Rr => ContaminationModel::build_rr(k, eps, &rho)?,
            NoiseKind::TwoLevel => ContaminationModel::build_two_level_rr(k, eps, config.nu)?,
            NoiseKind::Block => ContaminationModel::block_diagonal(k, eps, &rho)?,
            NoiseKind::Random => ContaminationModel::random_u(k, eps, config.noise_seed, &rho)?,
            NoiseKind::Transition => {
                let t = config.read_transition()?.expect("validated transition_file");
                ContaminationModel::build_from_transition(t, &rho)?
            }
        };
        Ok(Self { generator, model, ctable: CTable::new(config.ctable_reps, DEFAULT_SEED) })
    }
}

fn xi(epsilon: f64) -> f64 {
    epsilon / (1.0 - epsilon)
}

struct NoiseInfo {
    v: DMatrix<f64>,
    region: NoiseRegion,
    rho_tilde: Vec<f64>,
}

fn fitting(config: &ExperimentConfig) -> bool {
    matches!(config.noise_model, NoiseModelChoice::FitRr | NoiseModelChoice::FitTwoLevel | NoiseModelChoice::FitGeneral)
}

fn noise_info(
    config: &ExperimentConfig,
    setup: &Setup,
    fit_inputs: Option<(&ClassProbabilities, &[usize], &ClassProbabilities, &[usize])>,
    rep: usize,
) -> Result<NoiseInfo> {
    let model = &setup.model;
    match config.noise_model {
        NoiseModelChoice::Known => Ok(NoiseInfo {
            v: model.inverse().clone(),
            region: NoiseRegion::degenerate(model.inverse())?,
            rho_tilde: model.rho_tilde().to_vec(),
        }),
        NoiseModelChoice::Interval => {
            let (lo, up) = (config.epsilon_low.expect("validated"), config.epsilon_upp.expect("validated"));
            let region = if config.noise == NoiseKind::TwoLevel {
                let nu = (config.nu_low.expect("validated"), config.nu_upp.expect("validated"));
                NoiseRegion::from_two_level_interval(config.k, (xi(lo), xi(up)), nu, xi(config.eps_bar), config.alpha_v)?
            } else {
                NoiseRegion::from_rr_interval(xi(lo), xi(up), xi(config.eps_bar), model.rho_tilde(), config.alpha_v)?
            };
            Ok(NoiseInfo { v: model.inverse().clone(), region, rho_tilde: model.rho_tilde().to_vec() })
        }
        NoiseModelChoice::FitRr | NoiseModelChoice::FitTwoLevel | NoiseModelChoice::FitGeneral => {
            let (cp, cy, np, ny) = fit_inputs.expect("fit splits are generated when fitting");
            let data = FitData::from_probabilities((cp, cy), (np, ny))?;
            let mut rng = seed::stream(config.seed, rep as u64, "fit");
            let fit = match config.noise_model {
                NoiseModelChoice::FitRr => fit_rr(&data, config.alpha_v, config.bootstrap, config.eps_bar, &mut rng)?,
                NoiseModelChoice::FitTwoLevel => {
                    fit_two_level_rr(&data, config.alpha_v, config.bootstrap, config.eps_bar, &mut rng)?
                }
                _ => fit_general(&data, config.alpha_v, config.bootstrap, &mut rng)?,
            };
            Ok(NoiseInfo { v: fit.v_hat, region: fit.region, rho_tilde: fit.rho_tilde })
        }
    }
}

fn scores_for(config: &ExperimentConfig, probs: &ClassProbabilities, rng: &mut rand_chacha::ChaCha8Rng) -> ScoreMatrix {
    match config.score {
        ScoreChoice::Hps => hps_scores(probs, config.jitter, rng),
        ScoreChoice::Aps => aps_scores(probs, false, rng),
        ScoreChoice::ApsRandomized => aps_scores(probs, true, rng),
    }
}

/// Runs repetition `rep`, returning one report per configured method.
pub fn run_repetition(config: &ExperimentConfig, setup: &Setup, rep: usize) -> Result<Vec<CoverageReport>> {
    let r = rep as u64;
    let extra = if fitting(config) { config.n_clean + config.n_fit } else { 0 };
    let n_total = config.n_train + config.n_cal + config.n_test + extra;
    let data = setup.generator.sample(n_total, seed::derive_seed(config.seed, r, "data"))?;
    let noisy = setup.model.corrupt_labels(data.y(), &mut seed::stream(config.seed, r, "noise"))?;
    let data = data.with_noisy(noisy)?;
    let parts = data.split(&[config.n_train, config.n_cal, config.n_test, config.n_clean.min(extra), extra.saturating_sub(config.n_clean)])?;
    let (train, cal, test) = (&parts[0], &parts[1], &parts[2]);
    let classifier = match config.classifier {
        ClassifierKind::Oracle => setup.generator.oracle(),
        ClassifierKind::Logistic => {
            train_logistic(train, config.epochs, config.learning_rate, seed::derive_seed(config.seed, r, "train"))?
        }
    };
    let predict = |m: &ProbabilityModel, x| m.predict(x);
    let mut score_rng = seed::stream(config.seed, r, "scores");
    let cal_scores = scores_for(config, &predict(&classifier, cal.x())?, &mut score_rng);
    let test_scores = scores_for(config, &predict(&classifier, test.x())?, &mut score_rng);
    let y_cal = cal.y_noisy().expect("noisy labels attached");

    let info = if fitting(config) {
        let (clean, fit) = (&parts[3], &parts[4]);
        let cp = predict(&classifier, clean.x())?;
        let np = predict(&classifier, fit.x())?;
        noise_info(config, setup, Some((&cp, clean.y(), &np, fit.y_noisy().expect("noisy labels attached"))), rep)?
    } else {
        noise_info(config, setup, None, rep)?
    };
    let inputs = CalibrationInputs {
        v: Some(&info.v),
        region: Some(&info.region),
        rho_tilde: Some(&info.rho_tilde),
        alpha: config.alpha,
        gamma: config.gamma,
        ctable: &setup.ctable,
    };
    config
        .methods
        .iter()
        .map(|&method| {
            let calibrated = calibrate(method, &cal_scores, y_cal, &inputs)?;
            let sets = test_scores.prediction_sets(&calibrated.thresholds)?;
            let mut report = evaluate(&sets, test.y(), config.k)?;
            report.method = method.name().to_string();
            report.alpha = config.alpha;
            report.rep = rep;
            report.n_cal = config.n_cal;
            report.seed = config.seed;
            Ok(report)
        })
        .collect()
}

/// Runs all repetitions in parallel; reports come back in repetition order,
/// then method order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<CoverageReport>> {
    let setup = Setup::new(config)?;
    let per_rep: Vec<Vec<CoverageReport>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_repetition(config, &setup, rep).map_err(|e| Error::Repetition { rep, source: Box::new(e) }))
        .collect::<Result<_>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::methods::Method;
    use crate::harness::report::metrics_csv;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            generator: GeneratorKind::Logistic,
            k: 3,
            d: 5,
            n_cal: 600,
            n_test: 300,
            reps: 3,
            ctable_reps: 200,
            methods: vec![Method::StandardLc, Method::AdaptivePlus, Method::AdaptiveCi],
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_output() {
        let c = small();
        let a = metrics_csv(&run_experiment(&c).unwrap());
        let b = metrics_csv(&run_experiment(&c).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 1 + 3 * 3 * 4);
        let other = metrics_csv(&run_experiment(&ExperimentConfig { seed: 1, ..c }).unwrap());
        assert_ne!(a, other);
    }

    #[test]
    fn zero_noise_plus_equals_standard() {
        let c = ExperimentConfig { epsilon: 0.0, methods: vec![Method::StandardLc, Method::AdaptivePlus], ..small() };
        let r = run_experiment(&c).unwrap();
        for pair in r.chunks(2) {
            assert_eq!(pair[0].label_coverage, pair[1].label_coverage);
            assert_eq!(pair[0].label_size, pair[1].label_size);
        }
    }

    #[test]
    fn every_pipeline_variant_runs() {
        let variants = [
            "generator=hypercube\nk=4\nd=30\nnoise=two-level\nnu=0.5\nnoise_model=fit-two-level\nbootstrap=50\nn_clean=2000",
            "generator=tree\nk=4\nd=6\nscore=aps-randomized\nnoise=block\nnoise_model=fit-general\nbootstrap=50",
            "generator=logistic\nk=3\nd=4\nclassifier=logistic\nn_train=500\nscore=aps\nnoise=random\nnoise_model=fit-rr\nbootstrap=50",
            "generator=logistic\nk=4\nd=4\nnoise=two-level\nnu=0.5\nnoise_model=interval\nepsilon_low=0\nepsilon_upp=0.2\nnu_low=0\nnu_upp=1",
        ];
        for v in variants {
            let text = format!(
                "{v}\nn_cal=800\nn_test=200\nreps=2\nctable_reps=100\nmethods=standard-lc,standard-marg,adaptive,adaptive+,adaptive-ci,adaptive-ci+,adaptive-marg,adaptive-marg+,adaptive-cc,adaptive-cc+"
            );
            let c = ExperimentConfig::parse(&text).unwrap();
            let r = run_experiment(&c).unwrap_or_else(|e| panic!("{v}: {e}"));
            assert_eq!(r.len(), 2 * 10);
            assert!(r.iter().all(|x| (0.0..=1.0).contains(&x.coverage) && x.avg_size <= 4.0));
        }
    }

    #[test]
    fn errors_name_the_repetition() {
        let c = ExperimentConfig { n_cal: 2, ..small() };
        match run_experiment(&c) {
            Err(Error::Repetition { rep, .. }) => assert!(rep < 3),
            other => panic!("expected a repetition error, got {other:?}"),
        }
    }
}
