//! Scalar-valued toy problems with table embeddings.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::export::project_pca;
use super::losses::LossWeights;
use super::metric::DistanceMetric;
use super::model::EmbeddingModel;
use super::separation::{separation_report, SeparationReport};
use super::train::{train_embedding, TrainConfig};
use crate::data::{PreferenceDataset, PreferenceLabel, PreferenceTriple, Segment, SegmentId};
use crate::error::Result;
use crate::optim::OptimizerKind;
use crate::seed::{self, streams};
use crate::stats;

/// Items with scalar values, each wrapped as a one-step segment whose return is its value.
#[derive(Clone, Debug)]
pub struct ScalarFixture {
    pub values: Vec<f64>,
    pub segments: Vec<Arc<Segment<f64>>>,
    pub prefs: PreferenceDataset<f64>,
}

impl ScalarFixture {
    pub fn from_values(values: Vec<f64>) -> Self {
        let segments = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                Arc::new(
                    Segment::new(
                        SegmentId::new(i, 0),
                        vec![vec![v]],
                        vec![vec![0.0]],
                        vec![v],
                    )
                    .expect("one-step segment"),
                )
            })
            .collect();
        Self {
            values,
            segments,
            prefs: PreferenceDataset::new(),
        }
    }

    /// Labels `(i, j)`: skipped when the values differ by less than `threshold`, else the larger wins.
    pub fn label(&mut self, i: usize, j: usize, threshold: f64) {
        let (a, b) = (self.values[i], self.values[j]);
        let label = if (a - b).abs() < threshold {
            PreferenceLabel::NoComparison
        } else if b > a {
            PreferenceLabel::PreferSecond
        } else {
            PreferenceLabel::PreferFirst
        };
        let t = PreferenceTriple::new(
            Arc::clone(&self.segments[i]),
            Arc::clone(&self.segments[j]),
            label,
            0,
        )
        .expect("distinct items");
        self.prefs.push(t);
    }

    /// Labels `n_pairs` distinct random pairs.
    pub fn label_random_pairs(&mut self, n_pairs: usize, threshold: f64, rng: &mut seed::Rng) {
        let n = self.values.len();
        let max_pairs = n * (n - 1) / 2;
        while self.prefs.len() < n_pairs.min(max_pairs) {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            if i != j
                && !self
                    .prefs
                    .contains_pair(self.segments[i].id, self.segments[j].id)
            {
                self.label(i, j, threshold);
            }
        }
    }

    /// Standard-normal table embedding over the items.
    pub fn table(&self, dim: usize, rng: &mut seed::Rng) -> EmbeddingModel<f64> {
        EmbeddingModel::table(self.segments.iter().map(|s| s.id), dim, rng)
    }

    /// Mean distance over ambiguous labeled pairs.
    pub fn mean_ambiguous_distance(
        &self,
        model: &EmbeddingModel<f64>,
        metric: DistanceMetric,
    ) -> Result<f64> {
        let d: Vec<f64> = self
            .prefs
            .ambiguous()
            .map(|t| Ok(metric.distance(&model.encode(&t.seg0)?, &model.encode(&t.seg1)?)))
            .collect::<Result<_>>()?;
        Ok(stats::mean(&d))
    }

    /// Spearman correlation between item values and the first principal component.
    pub fn principal_axis_spearman(&self, model: &EmbeddingModel<f64>) -> Result<f64> {
        let z: Vec<Vec<f64>> = self
            .segments
            .iter()
            .map(|s| model.encode(s))
            .collect::<Result<_>>()?;
        let proj = project_pca(&z, &self.values)?;
        let pc1: Vec<f64> = proj.iter().map(|p| p[0]).collect();
        Ok(stats::spearman(&self.values, &pc1))
    }
}

/// Items with values uniform on `[0, 1]` and random labeled pairs.
pub fn uniform_fixture(n_items: usize, n_pairs: usize, threshold: f64, seed: u64) -> ScalarFixture {
    let mut rng = seed::stream(seed, 0, streams::DATASET);
    let values = (0..n_items).map(|_| rng.random::<f64>()).collect();
    let mut fx = ScalarFixture::from_values(values);
    fx.label_random_pairs(
        n_pairs,
        threshold,
        &mut seed::stream(seed, 0, streams::QUERIES),
    );
    fx
}

/// Items split evenly at random between value bands `[lo, lo + width]`.
pub fn band_fixture(
    n_items: usize,
    bands: &[f64],
    width: f64,
    n_pairs: usize,
    threshold: f64,
    seed: u64,
) -> ScalarFixture {
    let mut rng = seed::stream(seed, 0, streams::DATASET);
    let values = (0..n_items)
        .map(|_| bands[rng.random_range(0..bands.len())] + width * rng.random::<f64>())
        .collect();
    let mut fx = ScalarFixture::from_values(values);
    fx.label_random_pairs(
        n_pairs,
        threshold,
        &mut seed::stream(seed, 0, streams::QUERIES),
    );
    fx
}

/// Settings of the 2-D toy reproduction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoQuadConfig {
    pub n_items: usize,
    pub n_pairs: usize,
    pub threshold: f64,
    pub steps: usize,
    pub train: TrainConfig,
}

impl Default for DemoQuadConfig {
    fn default() -> Self {
        Self {
            n_items: 1000,
            n_pairs: 10_000,
            threshold: 0.3,
            steps: 2000,
            train: TrainConfig {
                lr: 0.1,
                optimizer: OptimizerKind::Adam,
                weights: LossWeights {
                    lambda_amb: 0.0,
                    lambda_quad: 1.0,
                    lambda_norm: 0.1,
                },
                metric: DistanceMetric::L2,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct DemoQuadResult {
    pub fixture: ScalarFixture,
    pub model: EmbeddingModel<f64>,
    pub spearman: f64,
    pub separation: SeparationReport,
}

/// Trains 2-D table embeddings of uniform-value items and measures how well
/// the first principal axis orders them.
pub fn demo_quad(cfg: &DemoQuadConfig, seed: u64) -> Result<DemoQuadResult> {
    let fixture = uniform_fixture(cfg.n_items, cfg.n_pairs, cfg.threshold, seed);
    let mut model = fixture.table(2, &mut seed::stream(seed, 0, streams::EMBED_INIT));
    let mut opt = cfg.train.optimizer_for(&model);
    train_embedding(
        &mut model,
        &mut opt,
        None,
        &fixture.prefs,
        cfg.steps,
        &cfg.train,
        seed::stream_seed(seed, 0, streams::EMBED_TRAIN),
    )?;
    let spearman = fixture.principal_axis_spearman(&model)?;
    let separation = separation_report(&model, &fixture.prefs, cfg.train.metric)?;
    Ok(DemoQuadResult {
        fixture,
        model,
        spearman,
        separation,
    })
}
