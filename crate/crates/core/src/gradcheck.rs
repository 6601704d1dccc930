//! Central finite-difference checks of every analytic gradient.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{PreferenceLabel, PreferenceTriple, Segment, SegmentId};
use crate::embedding::{
    loss_amb, loss_norm, loss_quad, loss_recon, total_loss, DistanceMetric, EmbeddingModel,
    EncoderConfig, LossBatch, LossWeights,
};
use crate::error::Result;
use crate::reward::{ce_loss, RewardNet};
use crate::seed::{self, Rng};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Magnitude floor of the relative-error denominator.
pub const FLOOR: f64 = 1e-4;
pub const EMBEDDING_TOL: f64 = 1e-5;
pub const REWARD_TOL: f64 = 1e-4;
pub const FIXTURES_PER_SUITE: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub suite: String,
    pub fixture: usize,
    pub n_params: usize,
    /// `max_i |g_i − ĝ_i| / max(|g_i|, |ĝ_i|, FLOOR)`.
    pub max_rel_error: f64,
    pub worst_param: usize,
    /// First parameter whose analytic or numeric gradient is not finite.
    pub non_finite: Option<usize>,
    pub passed: bool,
}

/// Compares the analytic gradient of `f` at `params` with central differences.
pub fn check_flat(
    suite: &str,
    fixture: usize,
    params: &[f64],
    f: impl Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    tol: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = f(params)?;
    let mut worst = (0.0, 0);
    let mut non_finite = None;
    let mut p = params.to_vec();
    for i in 0..params.len() {
        p[i] = params[i] + STEP;
        let up = f(&p)?.0;
        p[i] = params[i] - STEP;
        let down = f(&p)?.0;
        p[i] = params[i];
        let numeric = (up - down) / (2.0 * STEP);
        if !(numeric.is_finite() && analytic[i].is_finite()) {
            non_finite.get_or_insert(i);
            continue;
        }
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(FLOOR);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradCheckReport {
        suite: suite.to_string(),
        fixture,
        n_params: params.len(),
        max_rel_error: worst.0,
        worst_param: worst.1,
        non_finite,
        passed: non_finite.is_none() && worst.0 <= tol,
    })
}

fn flat(model: &EmbeddingModel<f64>) -> Vec<f64> {
    model.blocks().concat()
}

fn with_params(model: &EmbeddingModel<f64>, p: &[f64]) -> EmbeddingModel<f64> {
    let mut m = model.clone();
    for (i, &v) in p.iter().enumerate() {
        *m.param_mut(i) = v;
    }
    m
}

fn check_model(
    suite: &str,
    fixture: usize,
    model: &EmbeddingModel<f64>,
    f: impl Fn(&EmbeddingModel<f64>) -> Result<(f64, Vec<f64>)>,
    tol: f64,
) -> Result<GradCheckReport> {
    check_flat(
        suite,
        fixture,
        &flat(model),
        |p| f(&with_params(model, p)),
        tol,
    )
}

fn gaussian(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_segment(id: usize, h: usize, rng: &mut Rng) -> Arc<Segment<f64>> {
    let states = (0..h).map(|_| vec![gaussian(rng)]).collect();
    let actions = (0..h).map(|_| vec![gaussian(rng)]).collect();
    let rewards = (0..h).map(|_| gaussian(rng)).collect();
    Arc::new(Segment::new(SegmentId::new(id, 0), states, actions, rewards).expect("valid segment"))
}

fn random_label(rng: &mut Rng, allow_skip: bool) -> PreferenceLabel {
    match rng.random_range(0..if allow_skip { 3 } else { 2 }) {
        0 => PreferenceLabel::PreferFirst,
        1 => PreferenceLabel::PreferSecond,
        _ => PreferenceLabel::NoComparison,
    }
}

/// Triples over consecutive segment pairs; the first is clear and the last ambiguous when `mixed`.
fn triples(segs: &[Arc<Segment<f64>>], rng: &mut Rng, mixed: bool) -> Vec<PreferenceTriple<f64>> {
    let n = segs.len() / 2;
    (0..n)
        .map(|k| {
            let label = match (mixed, k) {
                (true, 0) => PreferenceLabel::PreferSecond,
                (true, k) if k + 1 == n => PreferenceLabel::NoComparison,
                _ => random_label(rng, mixed),
            };
            PreferenceTriple::new(
                Arc::clone(&segs[2 * k]),
                Arc::clone(&segs[2 * k + 1]),
                label,
                0,
            )
            .expect("distinct")
        })
        .collect()
}

fn table(segs: &[Arc<Segment<f64>>], rng: &mut Rng) -> EmbeddingModel<f64> {
    EmbeddingModel::table(segs.iter().map(|s| s.id), 2, rng)
}

fn tiny_encoder(rng: &mut Rng) -> EmbeddingModel<f64> {
    let cfg = EncoderConfig {
        hidden: vec![2],
        decoder_hidden: vec![],
    };
    EmbeddingModel::encoder(1, 1, 2, &cfg, rng)
}

/// Table entries kept away from the unit-norm kink.
fn table_off_kink(segs: &[Arc<Segment<f64>>], rng: &mut Rng) -> EmbeddingModel<f64> {
    loop {
        let m = table(segs, rng);
        let near = segs.iter().any(|s| {
            let z = m.encode(s).unwrap();
            ((z[0] * z[0] + z[1] * z[1]).sqrt() - 1.0).abs() < 0.05
        });
        if !near {
            return m;
        }
    }
}

/// Every embedding and reward suite over `FIXTURES_PER_SUITE` random fixtures.
pub fn run_all(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut out = Vec::new();
    for k in 0..FIXTURES_PER_SUITE {
        let mut rng = seed::stream(seed, k as u64, 0);
        for metric in [DistanceMetric::L2, DistanceMetric::SquaredL2] {
            let tag = match metric {
                DistanceMetric::L2 => "l2",
                DistanceMetric::SquaredL2 => "squared_l2",
            };
            let segs: Vec<_> = (0..6).map(|i| random_segment(i, 2, &mut rng)).collect();
            let ts = triples(&segs, &mut rng, true);
            let refs: Vec<&PreferenceTriple<f64>> = ts.iter().collect();
            let m = table(&segs, &mut rng);
            out.push(check_model(
                &format!("amb/{tag}"),
                k,
                &m,
                |m| loss_amb(m, &refs, metric),
                EMBEDDING_TOL,
            )?);

            let segs: Vec<_> = (0..4).map(|i| random_segment(i, 2, &mut rng)).collect();
            let ts = triples(&segs, &mut rng, false);
            let pairs = [(&ts[0], &ts[1]), (&ts[1], &ts[0])];
            let m = table(&segs, &mut rng);
            out.push(check_model(
                &format!("quad/{tag}"),
                k,
                &m,
                |m| loss_quad(m, &pairs, metric),
                EMBEDDING_TOL,
            )?);
        }

        let segs: Vec<_> = (0..5).map(|i| random_segment(i, 2, &mut rng)).collect();
        let m = table_off_kink(&segs, &mut rng);
        let refs: Vec<&Segment<f64>> = segs.iter().map(|s| s.as_ref()).collect();
        out.push(check_model(
            "norm",
            k,
            &m,
            |m| loss_norm(m, &refs),
            EMBEDDING_TOL,
        )?);

        let segs: Vec<_> = (0..4).map(|i| random_segment(i, 3, &mut rng)).collect();
        let transitions: Vec<(&Segment<f64>, usize)> = segs
            .iter()
            .map(|s| (s.as_ref(), rng.random_range(0..3)))
            .collect();
        let m = tiny_encoder(&mut rng);
        out.push(check_model(
            "recon",
            k,
            &m,
            |m| loss_recon(m, &transitions),
            EMBEDDING_TOL,
        )?);

        let ts = triples(&segs, &mut rng, false);
        let amb_ts = triples(&segs[1..], &mut rng, true);
        let mut amb: Vec<&PreferenceTriple<f64>> = ts.iter().collect();
        amb.push(&amb_ts[0]);
        let batch = LossBatch {
            amb,
            quad: vec![(&ts[0], &ts[1])],
            norm: segs.iter().map(|s| s.as_ref()).collect(),
            recon: transitions.clone(),
        };
        let weights = LossWeights {
            lambda_amb: 0.3,
            lambda_quad: 0.7,
            lambda_norm: 0.2,
        };
        out.push(check_model(
            "total",
            k,
            &m,
            |m| total_loss(m, &batch, &weights, DistanceMetric::L2).map(|(v, g)| (v.total, g)),
            EMBEDDING_TOL,
        )?);

        let net = RewardNet::<f64>::new(2, &[2], &mut rng);
        let segs: Vec<_> = (0..6).map(|i| random_segment(i, 3, &mut rng)).collect();
        let ts = triples(&segs, &mut rng, false);
        let refs: Vec<&PreferenceTriple<f64>> = ts.iter().collect();
        out.push(check_flat(
            "reward_ce",
            k,
            net.mlp.params(),
            |p| {
                let mut n = net.clone();
                n.mlp.params_mut().copy_from_slice(p);
                ce_loss(&n, &refs)
            },
            REWARD_TOL,
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass_and_stay_small() {
        let reports = run_all(0).unwrap();
        assert_eq!(reports.len(), FIXTURES_PER_SUITE * 8);
        for r in &reports {
            assert!(r.n_params <= 20, "{r:?}");
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn detects_wrong_gradient_and_non_finite() {
        let bad = check_flat(
            "bad",
            0,
            &[1.0, 2.0],
            |p| Ok((p[0] * p[0] + p[1], vec![2.0 * p[0], 2.0])),
            1e-5,
        )
        .unwrap();
        assert!(!bad.passed);
        assert_eq!(bad.worst_param, 1);
        let nan = check_flat("nan", 0, &[1.0], |_| Ok((0.0, vec![f64::NAN])), 1e-5).unwrap();
        assert_eq!(nan.non_finite, Some(0));
        assert!(!nan.passed);
    }
}
