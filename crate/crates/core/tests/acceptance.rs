//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported but do not fail the target;
//! every other failure exits non-zero.

use std::io::Write;
use std::time::{Duration, Instant};

use clarify_core::data::{sample_segments_with, PreferenceLabel};
use clarify_core::embedding::fixtures::{band_fixture, demo_quad, uniform_fixture, DemoQuadConfig};
use clarify_core::embedding::{
    separation_report, train_embedding, DistanceMetric, LossWeights, TrainConfig,
};
use clarify_core::gradcheck;
use clarify_core::harness::{
    run_experiment, setup, ExperimentConfig, FinalMetrics, RunOptions, METRICS_FILE,
};
use clarify_core::seed;
use clarify_core::selection::{accept, Candidate, DensityModel, SelectionMode};
use clarify_core::stats::mean;
use clarify_core::teacher::{scripted_label, TeacherConfig};

const KNOWN_RED: &[&str] = &["collapse sentinel"];

const ACCEPTANCE_CONFIG: &str = include_str!("../../../configs/acceptance.toml");

struct Suite {
    failures: Vec<&'static str>,
    passed: usize,
}

impl Suite {
    fn record(&mut self, name: &'static str, ok: bool, elapsed: Duration, detail: String) {
        let status = if ok { "PASS" } else { "FAIL" };
        let mut err = std::io::stderr();
        let _ = writeln!(
            err,
            "{status} {name} [{:.1}s] {detail}",
            elapsed.as_secs_f64()
        );
        if ok {
            self.passed += 1;
        } else {
            self.failures.push(name);
        }
    }
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn gradient_oracles(s: &mut Suite) {
    let t = Instant::now();
    let reports = gradcheck::run_all(0).expect("gradient suites run");
    let worst = |prefix: &str| {
        reports
            .iter()
            .filter(|r| r.suite.starts_with(prefix))
            .map(|r| r.max_rel_error)
            .fold(0.0, f64::max)
    };
    let all = reports.iter().all(|r| r.passed);
    let elapsed = t.elapsed();
    let detail = format!(
        "{} fixtures; worst rel err embedding {:.1e} (tol 1e-5), reward {:.1e} (tol 1e-4)",
        reports.len(),
        ["amb", "quad", "norm", "recon", "total"]
            .iter()
            .map(|p| worst(p))
            .fold(0.0, f64::max),
        worst("reward_ce")
    );
    s.record(
        "gradient oracle suite",
        all && elapsed < Duration::from_secs(60),
        elapsed,
        detail,
    );
}

fn demo_quad_reproduction(s: &mut Suite) {
    let t = Instant::now();
    let rho: Vec<f64> = (0..5)
        .map(|seed| {
            demo_quad(&DemoQuadConfig::default(), seed)
                .unwrap()
                .spearman
        })
        .collect();
    let hits = rho.iter().filter(|&&r| r >= 0.9).count();
    let elapsed = t.elapsed();
    s.record(
        "demo-quad reproduction",
        hits >= 4 && elapsed < Duration::from_secs(120),
        elapsed,
        format!("spearman per seed {} ({hits}/5 >= 0.9, need 4)", fmt(&rho)),
    );
}

fn margin_check(s: &mut Suite) {
    let t = Instant::now();
    let cfg = TrainConfig {
        lr: 0.1,
        weights: LossWeights {
            lambda_amb: 1.0,
            lambda_quad: 0.0,
            lambda_norm: 0.1,
        },
        ..TrainConfig::default()
    };
    let margins: Vec<f64> = (0..5)
        .map(|seed| {
            let fx = band_fixture(200, &[0.0, 0.85], 0.1, 2000, 0.3, seed);
            let mut model = fx.table(2, &mut seed::rng(seed));
            let mut opt = cfg.optimizer_for(&model);
            train_embedding(&mut model, &mut opt, None, &fx.prefs, 5000, &cfg, seed).unwrap();
            separation_report(&model, &fx.prefs, DistanceMetric::L2)
                .unwrap()
                .margin
                .unwrap_or(f64::NAN)
        })
        .collect();
    let hits = margins.iter().filter(|&&m| m > 0.0).count();
    let elapsed = t.elapsed();
    s.record(
        "margin (two-band fixture)",
        hits >= 4 && elapsed < Duration::from_secs(120),
        elapsed,
        format!("margin per seed {} ({hits}/5 > 0, need 4)", fmt(&margins)),
    );
}

fn separability_check(s: &mut Suite) {
    let t = Instant::now();
    let mut cfg = DemoQuadConfig::default();
    cfg.train.weights = LossWeights::default();
    let res = demo_quad(&cfg, 0).unwrap();
    let acc = res.separation.train_accuracy.unwrap_or(f64::NAN);
    let elapsed = t.elapsed();
    s.record(
        "convex separability",
        acc >= 0.9 && elapsed < Duration::from_secs(120),
        elapsed,
        format!("centroid hyperplane accuracy {acc:.4} (need >= 0.9)"),
    );
}

fn collapse_sentinel(s: &mut Suite) {
    let t = Instant::now();
    let ratio = |lambda_quad: f64, seed: u64| {
        let fx = uniform_fixture(1000, 10_000, 0.3, seed);
        let mut model = fx.table(2, &mut seed::rng(seed));
        let cfg = TrainConfig {
            lr: 0.1,
            weights: LossWeights {
                lambda_amb: 0.1,
                lambda_quad,
                lambda_norm: 0.0,
            },
            ..TrainConfig::default()
        };
        let mut opt = cfg.optimizer_for(&model);
        let before = fx
            .mean_ambiguous_distance(&model, DistanceMetric::L2)
            .unwrap();
        train_embedding(&mut model, &mut opt, None, &fx.prefs, 5000, &cfg, seed).unwrap();
        fx.mean_ambiguous_distance(&model, DistanceMetric::L2)
            .unwrap()
            / before
    };
    let without: Vec<f64> = (0..3).map(|seed| ratio(0.0, seed)).collect();
    let with: Vec<f64> = (0..3).map(|seed| ratio(1.0, seed)).collect();
    let collapses = without.iter().all(|&r| r < 0.1);
    let holds = with.iter().all(|&r| r > 0.3);
    s.record(
        "collapse sentinel",
        collapses && holds,
        t.elapsed(),
        format!(
            "ambiguous distance / initial: quad off {} (need < 0.1), quad on {} (need > 0.3)",
            fmt(&without),
            fmt(&with)
        ),
    );
}

fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn rejection_law(s: &mut Suite) {
    use rand::Rng as _;
    let t = Instant::now();
    let density =
        DensityModel::from_masses(vec![0.0, 1.0, 2.0], vec![0.2, 0.8], vec![0.8, 0.2], 0.0)
            .unwrap();
    let seg = std::sync::Arc::new(
        clarify_core::data::Segment::new(
            clarify_core::data::SegmentId::new(0, 0),
            vec![vec![0.0]],
            vec![vec![0.0]],
            vec![0.0],
        )
        .unwrap(),
    );
    let p = [0.5, 0.5];
    let z: f64 = p.iter().zip(&density.rho).map(|(a, b)| a * b).sum();
    let target: Vec<f64> = p.iter().zip(&density.rho).map(|(a, b)| a * b / z).collect();
    let tvs: Vec<f64> = (0..3)
        .map(|seed| {
            let mut rng = seed::rng(seed);
            let pool: Vec<Candidate<f64>> = (0..100_000)
                .map(|_| Candidate {
                    seg0: seg.clone(),
                    seg1: seg.clone(),
                    distance: if rng.random::<f64>() < p[0] { 0.5 } else { 1.5 },
                })
                .collect();
            let acc = accept(&pool, &density, &mut rng);
            let mut freq = [0.0; 2];
            for &i in &acc {
                freq[density.bin(pool[i].distance)] += 1.0 / acc.len() as f64;
            }
            tv_distance(&freq, &target)
        })
        .collect();
    let elapsed = t.elapsed();
    s.record(
        "rejection-sampling law",
        tvs.iter().all(|&v| v <= 0.03) && elapsed < Duration::from_secs(30),
        elapsed,
        format!("total variation per seed {} (need <= 0.03)", fmt(&tvs)),
    );
}

fn run(cfg: &ExperimentConfig) -> (FinalMetrics, Vec<u8>) {
    let dir = tempfile::tempdir().unwrap();
    let fin = run_experiment(cfg, dir.path(), &RunOptions::default())
        .unwrap()
        .unwrap();
    (fin, std::fs::read(dir.path().join(METRICS_FILE)).unwrap())
}

fn gridnav_experiments(s: &mut Suite) {
    let base = ExperimentConfig::from_toml(ACCEPTANCE_CONFIG).unwrap();
    let t = Instant::now();
    let mut clarify = Vec::new();
    let mut random = Vec::new();
    for seed in 0..5 {
        let mut cfg = base.clone();
        cfg.seed = seed;
        clarify.push(run(&cfg).0);
        cfg.selection = SelectionMode::Random;
        random.push(run(&cfg).0);
    }
    let elapsed = t.elapsed();
    let clar: Vec<f64> = clarify
        .iter()
        .map(|f| f.selected_clarity_ratio.unwrap())
        .collect();
    let rand: Vec<f64> = random
        .iter()
        .map(|f| f.selected_clarity_ratio.unwrap())
        .collect();
    let uplift = mean(&clar) - mean(&rand);
    s.record(
        "clarity-ratio uplift",
        uplift >= 0.10 && elapsed < Duration::from_secs(600),
        elapsed,
        format!(
            "selected-query clarity clarify {} vs random {}; mean uplift {:.1} pp (need >= 10)",
            fmt(&clar),
            fmt(&rand),
            100.0 * uplift
        ),
    );
    let spearman: Vec<f64> = clarify
        .iter()
        .map(|f| f.eval.spearman.unwrap_or(f64::NAN))
        .collect();
    let ret: Vec<f64> = clarify
        .iter()
        .map(|f| f.eval.normalized_return.unwrap_or(f64::NAN))
        .collect();
    s.record(
        "end-to-end reward quality",
        mean(&spearman) >= 0.8 && mean(&ret) >= 0.9,
        elapsed,
        format!(
            "spearman {} mean {:.3} (need >= 0.8); normalized return {} mean {:.3} (need >= 0.9)",
            fmt(&spearman),
            mean(&spearman),
            fmt(&ret),
            mean(&ret)
        ),
    );
}

fn teacher_law(s: &mut Suite) {
    let t = Instant::now();
    let cfg = ExperimentConfig::from_toml(ACCEPTANCE_CONFIG).unwrap();
    let data = setup(&cfg).unwrap().dataset;
    let mut ok = true;
    let mut rows = Vec::new();
    for seed in 0..3 {
        let segs =
            sample_segments_with(&data, cfg.horizon, 2000, &mut seed::rng(100 + seed)).unwrap();
        let fracs: Vec<f64> = [0.1, 0.5, 0.7]
            .iter()
            .map(|&eps| {
                let teacher = TeacherConfig::new(eps, cfg.horizon, data.r_avg).unwrap();
                let skips = segs
                    .chunks(2)
                    .filter(|p| {
                        scripted_label(&p[0], &p[1], &teacher).unwrap()
                            == PreferenceLabel::NoComparison
                    })
                    .count();
                skips as f64 / 1000.0
            })
            .collect();
        ok &= fracs.windows(2).all(|w| w[0] <= w[1]);
        rows.push(fmt(&fracs));
    }
    s.record(
        "teacher law",
        ok,
        t.elapsed(),
        format!(
            "skip fraction at eps 0.1/0.5/0.7 per seed {}",
            rows.join(" ")
        ),
    );
}

fn determinism(s: &mut Suite) {
    let t = Instant::now();
    let mut cfg = ExperimentConfig::from_toml(ACCEPTANCE_CONFIG).unwrap();
    cfg.seed = 3;
    cfg.n_total = 150;
    cfg.n_init = 300;
    cfg.n_emb = 50;
    let (_, a) = run(&cfg);
    let (_, b) = run(&cfg);
    s.record(
        "determinism",
        a == b && !a.is_empty(),
        t.elapsed(),
        format!("metrics.jsonl {} bytes, identical: {}", a.len(), a == b),
    );
}

fn main() {
    let mut s = Suite {
        failures: Vec::new(),
        passed: 0,
    };
    gradient_oracles(&mut s);
    demo_quad_reproduction(&mut s);
    margin_check(&mut s);
    separability_check(&mut s);
    collapse_sentinel(&mut s);
    rejection_law(&mut s);
    gridnav_experiments(&mut s);
    teacher_law(&mut s);
    determinism(&mut s);
    let unexpected: Vec<&str> = s
        .failures
        .iter()
        .copied()
        .filter(|f| !KNOWN_RED.contains(f))
        .collect();
    let mut err = std::io::stderr();
    let _ = writeln!(
        err,
        "acceptance: {} passed, {} failed ({} known red: {})",
        s.passed,
        s.failures.len(),
        s.failures.len() - unexpected.len(),
        KNOWN_RED.join(", ")
    );
    if !unexpected.is_empty() {
        let _ = writeln!(err, "unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
