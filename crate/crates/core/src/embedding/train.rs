use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::losses::{total_loss, LossBatch, LossValues, LossWeights};
use super::metric::DistanceMetric;
use super::model::{EmbeddingMode, EmbeddingModel};
use crate::data::{
    sample_segment_ids, OfflineDataset, PreferenceDataset, PreferenceTriple, Segment,
};
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerKind};
use crate::scalar::Scalar;
use crate::seed::{self, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub weights: LossWeights,
    pub metric: DistanceMetric,
    /// Triples drawn from each of the clear and ambiguous subsets per step.
    pub amb_batch: usize,
    /// Pairs of distinct clear triples per step.
    pub quad_batch: usize,
    pub norm_batch: usize,
    pub recon_batch: usize,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            optimizer: OptimizerKind::Adam,
            weights: LossWeights::default(),
            metric: DistanceMetric::L2,
            amb_batch: 64,
            quad_batch: 64,
            norm_batch: 64,
            recon_batch: 64,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "embedding lr {} must be positive",
                self.lr
            )));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be positive".into()));
        }
        Ok(())
    }

    pub fn optimizer_for<S: Scalar>(&self, model: &EmbeddingModel<S>) -> Optimizer<S> {
        Optimizer::new(self.optimizer, S::lit(self.lr), model.num_params())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: LossValues<f64>,
}

fn pick<'a, T>(items: &'a [T], rng: &mut Rng) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

/// Offline data for the reconstruction term: the dataset and the window length.
pub type ReconSource<'a, S> = (&'a OfflineDataset<S>, usize);

/// Runs `steps` optimizer updates on the total loss.
///
/// Each step draws its own batches: triples from each label subset for the
/// ambiguity term, pairs of distinct clear triples for the quadrilateral
/// term, labeled segments for the norm term and random transitions of random
/// windows for reconstruction. The loss before the update is recorded every
/// `log_every` steps.
pub fn train_embedding<S: Scalar>(
    model: &mut EmbeddingModel<S>,
    optimizer: &mut Optimizer<S>,
    recon: Option<ReconSource<'_, S>>,
    prefs: &PreferenceDataset<S>,
    steps: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<LossRecord>> {
    cfg.validate()?;
    let mut rng = seed::rng(seed);
    let clear: Vec<&PreferenceTriple<S>> = prefs.clear().collect();
    let ambiguous: Vec<&PreferenceTriple<S>> = prefs.ambiguous().collect();
    let labeled: Vec<Arc<Segment<S>>> = prefs.segments();
    let w = cfg.weights;
    let use_quad = w.lambda_quad > 0.0 && clear.len() >= 2;
    if w.lambda_quad > 0.0 && !use_quad && steps > 0 {
        log::warn!(
            "quadrilateral term skipped: {} clear triple(s), need 2",
            clear.len()
        );
    }
    let recon = recon.filter(|_| model.mode() == EmbeddingMode::Encoder && cfg.recon_batch > 0);
    let mut records = Vec::new();
    for step in 0..steps {
        let mut batch = LossBatch::default();
        if w.lambda_amb > 0.0 {
            for subset in [&clear, &ambiguous] {
                if !subset.is_empty() {
                    batch
                        .amb
                        .extend((0..cfg.amb_batch).map(|_| *pick(subset, &mut rng)));
                }
            }
        }
        if use_quad {
            for _ in 0..cfg.quad_batch {
                let i = rng.random_range(0..clear.len());
                let j = (i + 1 + rng.random_range(0..clear.len() - 1)) % clear.len();
                batch.quad.push((clear[i], clear[j]));
            }
        }
        if w.lambda_norm > 0.0 && !labeled.is_empty() {
            batch
                .norm
                .extend((0..cfg.norm_batch).map(|_| pick(&labeled, &mut rng).as_ref()));
        }
        let windows: Vec<Segment<S>> = match recon {
            Some((data, h)) => sample_segment_ids(data, h, cfg.recon_batch, &mut rng)?
                .into_iter()
                .map(|id| data.segment(id, h))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        for seg in &windows {
            batch.recon.push((seg, rng.random_range(0..seg.len())));
        }
        let (values, grads) = total_loss(model, &batch, &w, cfg.metric)?;
        if step % cfg.log_every == 0 {
            records.push(LossRecord {
                step,
                loss: values.to_f64(),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite embedding gradient at step {step}"
            )));
        }
        optimizer.step_blocks(&mut model.blocks_mut(), &grads);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::fixtures::{demo_quad, DemoQuadConfig, ScalarFixture};
    use crate::embedding::EncoderConfig;
    use crate::envs::{GridNavEnv, QualityMix};

    #[test]
    fn zero_steps_is_identity() {
        let mut fx = ScalarFixture::from_values(vec![0.0, 0.5, 1.0]);
        fx.label(0, 2, 0.3);
        let mut model = fx.table(2, &mut seed::rng(0));
        let before = model.clone();
        let cfg = TrainConfig::default();
        let mut opt = cfg.optimizer_for(&model);
        assert!(
            train_embedding(&mut model, &mut opt, None, &fx.prefs, 0, &cfg, 0)
                .unwrap()
                .is_empty()
        );
        assert_eq!(model, before);
    }

    #[test]
    fn four_item_fixture_orders_distances() {
        let mut fx = ScalarFixture::from_values(vec![0.0, 0.1, 0.9, 1.0]);
        for i in 0..4 {
            for j in i + 1..4 {
                fx.label(i, j, 0.3);
            }
        }
        for s in 0..3 {
            let mut model = fx.table(2, &mut seed::rng(s));
            let cfg = TrainConfig {
                lr: 0.05,
                ..TrainConfig::default()
            };
            let mut opt = cfg.optimizer_for(&model);
            train_embedding(&mut model, &mut opt, None, &fx.prefs, 500, &cfg, s).unwrap();
            let z: Vec<Vec<f64>> = fx
                .segments
                .iter()
                .map(|x| model.encode(x).unwrap())
                .collect();
            let m = DistanceMetric::L2;
            assert!(
                m.distance(&z[2], &z[3]) < m.distance(&z[1], &z[2]),
                "seed {s}"
            );
        }
    }

    #[test]
    fn training_is_deterministic_and_logs_every_interval() {
        let cfg = DemoQuadConfig {
            n_items: 50,
            n_pairs: 200,
            steps: 250,
            ..DemoQuadConfig::default()
        };
        let a = demo_quad(&cfg, 4).unwrap();
        let b = demo_quad(&cfg, 4).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn encoder_training_with_reconstruction_runs() {
        let env = GridNavEnv::new(4, (3, 3), 30).unwrap();
        let mix = QualityMix::new(vec![(0.2, 0.5), (1.0, 0.5)]).unwrap();
        let data = crate::envs::generate_offline_dataset::<f64, _>(&env, &mix, 10, 0).unwrap();
        let segs = crate::data::sample_segments(&data, 10, 20, 1).unwrap();
        let mut prefs = PreferenceDataset::new();
        for (k, c) in segs.chunks(2).enumerate() {
            if c[0].id == c[1].id {
                continue;
            }
            let label = crate::teacher::perfect_label(&c[0], &c[1]);
            prefs.push(
                PreferenceTriple::new(Arc::new(c[0].clone()), Arc::new(c[1].clone()), label, k)
                    .unwrap(),
            );
        }
        let mut model = EmbeddingModel::<f64>::encoder(
            env.n_cells() + 2,
            4,
            8,
            &EncoderConfig::default(),
            &mut seed::rng(0),
        );
        let cfg = TrainConfig {
            lr: 1e-3,
            log_every: 10,
            ..TrainConfig::default()
        };
        let mut opt = cfg.optimizer_for(&model);
        let log =
            train_embedding(&mut model, &mut opt, Some((&data, 10)), &prefs, 60, &cfg, 2).unwrap();
        assert_eq!(log.len(), 6);
        assert!(log[0].loss.recon > 0.0);
        assert!(log.last().unwrap().loss.recon < log[0].loss.recon);
    }
}
