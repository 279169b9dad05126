//! Acceptance criteria. Each test writes one `PASS`/`FAIL` line straight to
//! stdout (bypassing output capture) before asserting.

use std::io::Write;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use noisecp::calibration::{
    adaptive_ci, adaptive_label_conditional, empirical_inflation, monte_carlo_c, rr_worst_case_comparison,
    standard_label_conditional, theoretical_bounds, BoundOptions, CTable, EcdfFamily, NoiseRegion, DEFAULT_REPS,
    DEFAULT_SEED,
};
use noisecp::contamination::{rr_inverse, two_level_inverse_entries, uniform, BlockStructure, ContaminationModel};
use noisecp::estimation::{fit_rr, population_q_tilde, sample_predictions, two_level_parameters, Estimate, FitData};
use noisecp::harness::config::{ClassifierKind, GeneratorKind, NoiseKind, NoiseModelChoice};
use noisecp::harness::{run_experiment, CoverageReport, ExperimentConfig, Method};
use noisecp::linalg;
use noisecp::scores::{hps_scores, ScoreKind, ScoreMatrix};
use noisecp::seed;
use noisecp::synth::Generator;

fn report(id: usize, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {id:>2} {} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn c01_algebraic_oracles() {
    let mut worst_closed: f64 = 0.0;
    let mut worst_identity: f64 = 0.0;
    let skewed = |k: usize| {
        let w: Vec<f64> = (0..k).map(|i| 1.0 + i as f64).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    for k in [2usize, 4, 8] {
        let blocks = BlockStructure::new(k).unwrap();
        for eps in [0.0, 0.05, 0.1, 0.2] {
            for rho in [uniform(k), skewed(k)] {
                let m = ContaminationModel::build_rr(k, eps, &rho).unwrap();
                let numeric = linalg::invert(m.mixture()).unwrap();
                worst_closed = worst_closed.max(linalg::max_abs_diff(&numeric, &rr_inverse(k, eps, m.rho_tilde())));
                let id = m.mixture() * m.inverse();
                worst_identity = worst_identity.max(linalg::max_abs_diff(&id, &DMatrix::identity(k, k)));
            }
            for nu in [0.0, 0.25, 0.5, 1.0] {
                let m = ContaminationModel::build_two_level_rr(k, eps, nu).unwrap();
                let numeric = linalg::invert(m.mixture()).unwrap();
                let (d, w, c) = two_level_inverse_entries(k, eps, nu);
                let closed = DMatrix::from_fn(k, k, |a, b| {
                    if a == b {
                        d
                    } else if blocks.same_block(a, b) {
                        w
                    } else {
                        c
                    }
                });
                worst_closed = worst_closed.max(linalg::max_abs_diff(&numeric, &closed));
                let id = m.mixture() * m.inverse();
                worst_identity = worst_identity.max(linalg::max_abs_diff(&id, &DMatrix::identity(k, k)));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_equation: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.gen_range(2..7);
        let mut t = DMatrix::from_fn(k, k, |_, _| rng.gen::<f64>());
        for b in 0..k {
            t[(b, b)] += k as f64;
            let s: f64 = t.column(b).sum();
            t.column_mut(b).scale_mut(1.0 / s);
        }
        let w: Vec<f64> = (0..k).map(|_| 0.2 + rng.gen::<f64>()).collect();
        let s: f64 = w.iter().sum();
        let rho: Vec<f64> = w.iter().map(|x| x / s).collect();
        let mut q = DMatrix::from_fn(k, k, |_, _| rng.gen::<f64>());
        for a in 0..k {
            let s: f64 = q.row(a).sum();
            q.row_mut(a).scale_mut(1.0 / s);
        }
        let model = ContaminationModel::build_from_transition(t, &rho).unwrap();
        let direct = model.mixture() * &q;
        worst_equation = worst_equation.max(linalg::max_abs_diff(&population_q_tilde(&model, &q), &direct));
    }

    let pass = worst_closed <= 1e-10 && worst_identity <= 1e-10 && worst_equation <= 1e-12;
    let detail = format!(
        "closed-form V err {worst_closed:.2e}, |MV - I| {worst_identity:.2e}, |Q~ - MQ| {worst_equation:.2e}"
    );
    report(1, "algebraic oracles", pass, &detail);
    assert!(pass, "{detail}");
}

fn random_scores(k: usize, n_k: usize, seed: u64) -> (ScoreMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..k * n_k * k).map(|_| rng.gen()).collect();
    let y: Vec<usize> = (0..k * n_k).map(|i| i % k).collect();
    (ScoreMatrix::from_values(k, values, ScoreKind::External, 0.0).unwrap(), y)
}

#[test]
fn c02_degeneracy_collapse() {
    let ctable = CTable::new(2000, DEFAULT_SEED);
    let k = 3;
    let mut failures = Vec::new();
    for n_k in [10usize, 100, 1000] {
        let (scores, y) = random_scores(k, n_k, n_k as u64);
        let standard = standard_label_conditional(&scores, &y, 0.1).unwrap();
        let plus = adaptive_label_conditional(&scores, &y, &DMatrix::identity(k, k), 0.1, &ctable, true).unwrap();
        if standard.values() != plus.values() {
            failures.push(format!("adaptive+ differs at n_k={n_k}"));
        }
        let v = ContaminationModel::build_rr(k, 0.1, &uniform(k)).unwrap().inverse().clone();
        let region = NoiseRegion::degenerate(&v).unwrap();
        for opt in [false, true] {
            let a = adaptive_label_conditional(&scores, &y, &v, 0.1, &ctable, opt).unwrap();
            let c = adaptive_ci(&scores, &y, &region, 0.1, &ctable, opt).unwrap();
            if a.values() != c.values() {
                failures.push(format!("adaptive-ci differs at n_k={n_k}, optimistic={opt}"));
            }
        }
    }
    let pass = failures.is_empty();
    let detail = if pass { "bit-identical for n_k in {10, 100, 1000}".to_string() } else { failures.join("; ") };
    report(2, "degeneracy collapse", pass, &detail);
    assert!(pass, "{detail}");
}

fn coverage_config(epsilon: f64) -> ExperimentConfig {
    ExperimentConfig {
        generator: GeneratorKind::Logistic,
        k: 4,
        d: 10,
        classifier: ClassifierKind::Oracle,
        n_cal: 5000,
        n_test: 2000,
        noise: NoiseKind::Rr,
        epsilon,
        methods: vec![Method::StandardLc, Method::Adaptive, Method::AdaptivePlus],
        ctable_reps: 1000,
        reps: 50,
        seed: 2024,
        ..Default::default()
    }
}

fn coverage_runs() -> &'static [(f64, Vec<CoverageReport>)] {
    static RUNS: OnceLock<Vec<(f64, Vec<CoverageReport>)>> = OnceLock::new();
    RUNS.get_or_init(|| [0.1, 0.2].iter().map(|&e| (e, run_experiment(&coverage_config(e)).unwrap())).collect())
}

fn by_method(reports: &[CoverageReport], method: Method) -> Vec<&CoverageReport> {
    reports.iter().filter(|r| r.method == method.name()).collect()
}

#[test]
fn c03_coverage_guarantee() {
    let mut pass = true;
    let mut parts = Vec::new();
    for (eps, reports) in coverage_runs() {
        let adaptive = by_method(reports, Method::Adaptive);
        let plus = by_method(reports, Method::AdaptivePlus);
        let standard = by_method(reports, Method::StandardLc);
        let mut a_min = f64::INFINITY;
        let mut p_range = (f64::INFINITY, f64::NEG_INFINITY);
        for l in 0..4 {
            let (m, se) = mean_se(&adaptive.iter().map(|r| r.label_coverage[l]).collect::<Vec<_>>());
            pass &= m >= 0.9 - 2.0 * se;
            a_min = a_min.min(m);
            let (p, _) = mean_se(&plus.iter().map(|r| r.label_coverage[l]).collect::<Vec<_>>());
            pass &= (0.88..=0.93).contains(&p);
            p_range = (p_range.0.min(p), p_range.1.max(p));
        }
        let smaller = plus.iter().zip(&standard).filter(|(p, s)| p.avg_size <= s.avg_size).count();
        let frac = smaller as f64 / plus.len() as f64;
        pass &= frac >= 0.9;
        parts.push(format!(
            "eps={eps}: adaptive min label cov {a_min:.4}, adaptive+ label cov [{:.4}, {:.4}], adaptive+ <= standard size in {:.0}% of reps",
            p_range.0,
            p_range.1,
            100.0 * frac
        ));
    }
    let detail = parts.join("; ");
    report(3, "coverage guarantee", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c04_standard_conservative() {
    let (_, reports) = coverage_runs().iter().find(|(e, _)| *e == 0.2).unwrap();
    let cells: Vec<f64> = by_method(reports, Method::StandardLc).iter().flat_map(|r| r.label_coverage.clone()).collect();
    let frac = cells.iter().filter(|&&c| c > 0.9).count() as f64 / cells.len() as f64;
    let pass = frac >= 0.95;
    let detail = format!("standard coverage > 0.9 in {:.1}% of {} (rep, label) cells at eps=0.2", 100.0 * frac, cells.len());
    report(4, "standard method conservative", pass, &detail);
    assert!(pass, "{detail}");
}

fn sorted_cdf(sorted: &[f64], t: f64) -> f64 {
    sorted.partition_point(|&s| s <= t) as f64 / sorted.len() as f64
}

struct Decomposition {
    /// Per (rep, label) standard coverage on a fresh test sample.
    coverage: Vec<[f64; 2]>,
    /// Per (rep, label) holdout estimate of `F_k^k(tau_k) - F~_k^k(tau_k)`.
    inflation: Vec<[f64; 2]>,
}

fn decomposition_runs() -> &'static Decomposition {
    static RUNS: OnceLock<Decomposition> = OnceLock::new();
    RUNS.get_or_init(|| {
        let (k, n_cal, n_test, n_hold, reps) = (2usize, 10_000usize, 5000usize, 400_000usize, 40u64);
        let generator = Generator::logistic(k, 5, 77).unwrap();
        let oracle = generator.oracle();
        let model = ContaminationModel::build_rr(k, 0.2, &generator.rho().unwrap()).unwrap();
        let scored = |n: usize, s: u64| {
            let data = generator.sample(n, seed::derive_seed(s, 0, "data")).unwrap();
            let noisy = model.corrupt_labels(data.y(), &mut seed::stream(s, 0, "noise")).unwrap();
            let probs = oracle.predict(data.x()).unwrap();
            let scores = hps_scores(&probs, 1e-6, &mut seed::stream(s, 0, "scores"));
            (scores, data.y().to_vec(), noisy)
        };
        let (hs, hy, hn) = scored(n_hold, 1_000_000);
        let group = |labels: &[usize], l: usize| {
            let mut v: Vec<f64> = (0..hs.n()).filter(|&i| labels[i] == l).map(|i| hs.get(i, l)).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let clean: Vec<Vec<f64>> = (0..k).map(|l| group(&hy, l)).collect();
        let noisy: Vec<Vec<f64>> = (0..k).map(|l| group(&hn, l)).collect();
        let mut out = Decomposition { coverage: Vec::new(), inflation: Vec::new() };
        for r in 0..reps {
            let (cs, _, cn) = scored(n_cal, 2 * r);
            let tau = standard_label_conditional(&cs, &cn, 0.1).unwrap();
            let (ts, ty, _) = scored(n_test, 2 * r + 1);
            let mut cov = [0.0; 2];
            let mut inf = [0.0; 2];
            for l in 0..k {
                let t = tau.tau(l);
                let idx: Vec<usize> = (0..ts.n()).filter(|&i| ty[i] == l).collect();
                cov[l] = idx.iter().filter(|&&i| ts.get(i, l) <= t).count() as f64 / idx.len() as f64;
                inf[l] = sorted_cdf(&clean[l], t) - sorted_cdf(&noisy[l], t);
            }
            out.coverage.push(cov);
            out.inflation.push(inf);
        }
        out
    })
}

#[test]
fn c05_inflation_decomposition() {
    let d = decomposition_runs();
    let mut pass = true;
    let mut parts = Vec::new();
    for l in 0..2 {
        let (cov, _) = mean_se(&d.coverage.iter().map(|c| c[l]).collect::<Vec<_>>());
        let (inf, _) = mean_se(&d.inflation.iter().map(|c| c[l]).collect::<Vec<_>>());
        let gap = (cov - 0.9 - inf).abs();
        pass &= gap <= 0.015;
        parts.push(format!("label {l}: coverage - 0.9 = {:.4}, E[Delta] = {inf:.4}, gap {gap:.4}", cov - 0.9));
    }
    let detail = parts.join("; ");
    report(5, "inflation decomposition", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c06_c_of_n() {
    let c1 = monte_carlo_c(1, 1_000_000, &mut seed::stream(DEFAULT_SEED, 1, "acceptance"));
    let table = CTable::new(DEFAULT_REPS, DEFAULT_SEED);
    let scaled: Vec<(usize, f64)> = [10usize, 100, 1000, 10_000].iter().map(|&n| (n, table.get(n) * (n as f64).sqrt())).collect();
    let pass = (c1 - 0.5).abs() <= 0.005 && scaled.iter().all(|(_, s)| (0.3..=1.0).contains(s));
    let list: Vec<String> = scaled.iter().map(|(n, s)| format!("{n}:{s:.3}")).collect();
    let detail = format!("c(1) = {c1:.4}, c(n) sqrt(n) = {}", list.join(" "));
    report(6, "c(n) values", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c07_estimation() {
    // worked two-level example, forward through the joint law
    let (eps, nu, psi, phi) = (0.2, 0.5, 0.9, 0.95);
    let model = ContaminationModel::build_two_level_rr(4, eps, nu).unwrap();
    let blocks = BlockStructure::new(4).unwrap();
    let q = DMatrix::from_fn(4, 4, |a, b| {
        if a == b {
            psi
        } else if blocks.same_block(a, b) {
            phi - psi
        } else {
            (1.0 - phi) / 2.0
        }
    });
    let qt = population_q_tilde(&model, &q);
    let rt = model.rho_tilde();
    let psi_tilde: f64 = (0..4).map(|a| rt[a] * qt[(a, a)]).sum();
    let phi_tilde: f64 = (0..4).map(|a| rt[a] * blocks.members(blocks.block_of(a)).map(|b| qt[(a, b)]).sum::<f64>()).sum();
    let (e, n) = two_level_parameters(psi, psi_tilde, phi, phi_tilde, 4).unwrap();
    let round_trip = (e - eps).abs().max((n - nu).abs());

    // recovery of the randomized-response strength
    let k = 4;
    let rr = ContaminationModel::build_rr(k, 0.2, &uniform(k)).unwrap();
    let conf = DMatrix::from_fn(k, k, |a, b| if a == b { 0.8 } else { 0.2 / 3.0 });
    let simulate = |s: u64| {
        let mut rng = seed::stream(s, 0, "acceptance-fit");
        let (cp, cy, _) = sample_predictions(&rr, &conf, 10_000, &mut rng).unwrap();
        let (np, _, ny) = sample_predictions(&rr, &conf, 100_000, &mut rng).unwrap();
        (FitData::new(k, cp, cy, np, ny).unwrap(), rng)
    };
    let mut recovered = 0;
    for s in 0..50 {
        let (data, mut rng) = simulate(s);
        let fit = fit_rr(&data, 0.01, 100, 0.5, &mut rng).unwrap();
        if let Estimate::Rr { epsilon, .. } = fit.estimate {
            recovered += usize::from((epsilon - 0.2).abs() <= 0.02);
        }
    }

    // bootstrap region coverage
    let mut covered = 0;
    for s in 1000..1200 {
        let (data, mut rng) = simulate(s);
        let fit = fit_rr(&data, 0.01, 1000, 0.5, &mut rng).unwrap();
        let truth = rr_inverse(k, 0.2, &fit.rho_tilde);
        covered += usize::from(fit.region.contains(&truth));
    }

    let pass = round_trip <= 1e-12 && recovered >= 45 && covered >= 190;
    let detail = format!(
        "two-level round trip err {round_trip:.1e}, eps recovered in {recovered}/50, region covers truth in {covered}/200"
    );
    report(7, "noise estimation", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c08_interval_monotonicity() {
    let lows = [0.2, 0.15, 0.1, 0.05, 0.0];
    let mut sizes = Vec::new();
    let mut pass = true;
    let mut worst_cov = f64::INFINITY;
    for &low in &lows {
        let config = ExperimentConfig {
            noise_model: NoiseModelChoice::Interval,
            epsilon_low: Some(low),
            epsilon_upp: Some(0.2),
            methods: vec![Method::AdaptiveCi],
            reps: 30,
            ..coverage_config(0.2)
        };
        let reports = run_experiment(&config).unwrap();
        sizes.push(mean_se(&reports.iter().map(|r| r.avg_size).collect::<Vec<_>>()).0);
        for l in 0..4 {
            let (m, se) = mean_se(&reports.iter().map(|r| r.label_coverage[l]).collect::<Vec<_>>());
            pass &= m >= 0.9 - 2.0 * se;
            worst_cov = worst_cov.min(m);
        }
    }
    pass &= sizes.windows(2).all(|w| w[1] >= w[0]);
    let list: Vec<String> = lows.iter().zip(&sizes).map(|(l, s)| format!("{l}:{s:.4}")).collect();
    let detail = format!("mean size by eps_low {}, min label coverage {worst_cov:.4}", list.join(" "));
    report(8, "interval monotonicity", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c09_dkw_deviation() {
    let k = 3;
    let n_group = 300;
    let v = rr_inverse(k, 0.2, &uniform(k));
    let powers = [0.5, 1.0, 2.0];
    let grid: Vec<f64> = (0..=2000).map(|i| i as f64 / 2000.0).collect();
    let mut sups = Vec::new();
    for run in 0..500u64 {
        let mut rng = seed::stream(run, 0, "acceptance-dkw");
        let y: Vec<usize> = (0..k * n_group).map(|i| i % k).collect();
        // score column c in noisy group l has CDF t^(powers[(l + c) % K])
        let values: Vec<f64> =
            y.iter().flat_map(|&l| (0..k).map(move |c| (l, c))).map(|(l, c)| rng.gen::<f64>().powf(1.0 / powers[(l + c) % k])).collect();
        let scores = ScoreMatrix::from_values(k, values, ScoreKind::External, 0.0).unwrap();
        let ecdf = EcdfFamily::new(&scores, &y).unwrap();
        for c in 0..k {
            let truth = |t: f64| {
                let f = |l: usize| t.clamp(0.0, 1.0).powf(powers[(l + c) % k]);
                (v[(c, c)] - 1.0) * f(c) + (0..k).filter(|&l| l != c).map(|l| v[(c, l)] * f(l)).sum::<f64>()
            };
            let mut points: Vec<f64> = (0..scores.n()).map(|i| scores.get(i, c)).chain(grid.iter().copied()).collect();
            points.sort_by(f64::total_cmp);
            let mut sup: f64 = 0.0;
            let mut prev = 0.0;
            for &t in &points {
                let est = empirical_inflation(&ecdf, &v, c, t);
                let d = truth(t);
                sup = sup.max((est - d).abs()).max((prev - d).abs());
                prev = est;
            }
            sups.push((c, sup));
        }
    }
    let s = |c: usize| (0..k).filter(|&l| l != c).map(|l| v[(c, l)].abs()).sum::<f64>();
    let mut pass = true;
    let mut parts = Vec::new();
    for eta in [0.1f64, 0.01] {
        let bound = |c: usize| 2.0 * s(c) * (((2.0 * k as f64).ln() + (1.0 / eta).ln()) / (2.0 * n_group as f64)).sqrt();
        let held = sups.iter().filter(|(c, sup)| *sup <= bound(*c)).count() as f64 / sups.len() as f64;
        pass &= held >= 1.0 - eta - 0.02;
        parts.push(format!("eta={eta}: bound held in {:.1}%", 100.0 * held));
    }
    let detail = format!("{} of {} (run, label) cells", parts.join(", "), sups.len());
    report(9, "DKW deviation bound", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c10_worst_case_interval() {
    let ctable = CTable::new(100, DEFAULT_SEED);
    let v = ContaminationModel::build_rr(2, 0.2, &uniform(2)).unwrap().inverse().clone();
    let b = theoretical_bounds(&v, 0, 999, 999, 0.1, &ctable, &BoundOptions::default()).unwrap();
    let mut pass = (b.worst_case_lower - 0.775).abs() < 1e-12 && b.worst_case_upper == 1.0;
    let cmp = rr_worst_case_comparison(0.2, 2, 0.1);
    pass &= (cmp.ours - b.worst_case_lower).abs() < 1e-12;
    let d = decomposition_runs();
    let cells: Vec<f64> = d.coverage.iter().flat_map(|c| c.iter().copied()).collect();
    let inside = cells.iter().filter(|&&c| b.worst_case_lower <= c && c <= b.worst_case_upper).count();
    pass &= inside == cells.len();
    let detail = format!(
        "interval [{:.4}, {:.4}], contains {inside}/{} observed coverages",
        b.worst_case_lower,
        b.worst_case_upper,
        cells.len()
    );
    report(10, "worst-case interval", pass, &detail);
    assert!(pass, "{detail}");
}
