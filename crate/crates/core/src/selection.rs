//! Query selection in embedding space.
//!
//! Labeled pair distances are binned into clear and ambiguous histograms, turned
//! into an acceptance density `ρ`, and candidate pairs are rejection sampled so
//! that accepted distances follow `q ∝ p·ρ`. Survivors are ranked by reward
//! ensemble disagreement.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{
    pair_key, sample_segment_ids, OfflineDataset, PreferenceDataset, Query, Segment, SegmentId,
};
use crate::embedding::{DistanceMetric, EmbeddingModel};
use crate::error::{Error, Result};
use crate::reward::{bt_from_returns, RewardEnsemble};
use crate::scalar::Scalar;
use crate::seed::Rng;
use crate::stats;

pub const DEFAULT_N_BIN: usize = 32;
pub const DEFAULT_EPS_D: f64 = 1e-6;

/// Equal-width bins over `[0, max]`; distances beyond `max` land in the last bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
}

impl DistanceHistogram {
    /// Edges over `[0, max]`. A non-positive `max` is widened to 1 so edges stay increasing.
    pub fn edges(max: f64, n_bin: usize) -> Result<Vec<f64>> {
        if n_bin == 0 {
            return Err(Error::InvalidArgument("n_bin must be at least 1".into()));
        }
        let max = if max > 0.0 && max.is_finite() {
            max
        } else {
            1.0
        };
        Ok((0..=n_bin).map(|i| max * i as f64 / n_bin as f64).collect())
    }

    pub fn fit(distances: &[f64], edges: Vec<f64>) -> Result<Self> {
        if distances.is_empty() {
            return Err(Error::InsufficientLabels);
        }
        let mut mass = vec![0.0; edges.len() - 1];
        for &d in distances {
            mass[bin_of(&edges, d)] += 1.0;
        }
        let n = distances.len() as f64;
        mass.iter_mut().for_each(|m| *m /= n);
        Ok(Self { edges, mass })
    }

    pub fn n_bin(&self) -> usize {
        self.mass.len()
    }

    pub fn bin(&self, d: f64) -> usize {
        bin_of(&self.edges, d)
    }
}

fn bin_of(edges: &[f64], d: f64) -> usize {
    let n = edges.len() - 1;
    let w = edges[n] / n as f64;
    ((d / w).floor().max(0.0) as usize).min(n - 1)
}

fn normalized(v: Vec<f64>) -> Option<Vec<f64>> {
    let s: f64 = v.iter().sum();
    (s > 0.0).then(|| v.into_iter().map(|x| x / s).collect())
}

/// Per-bin densities of labeled distances and the derived acceptance density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityModel {
    pub edges: Vec<f64>,
    pub rho_clr: Vec<f64>,
    pub rho_amb: Vec<f64>,
    pub rho1: Vec<f64>,
    pub rho2: Vec<f64>,
    pub rho: Vec<f64>,
    pub eps_d: f64,
    /// `rho1` fell back to uniform because `rho_clr ≤ rho_amb` everywhere.
    pub rho1_fallback: bool,
}

impl DensityModel {
    /// Derives `ρ₁ ∝ max(0, ρ_clr − ρ_amb)`, `ρ₂ ∝ (ρ_clr + ε)/(ρ_amb + ε)` and `ρ = ½(ρ₁ + ρ₂)`.
    pub fn from_masses(
        edges: Vec<f64>,
        rho_clr: Vec<f64>,
        rho_amb: Vec<f64>,
        eps_d: f64,
    ) -> Result<Self> {
        let n = edges.len().saturating_sub(1);
        if n == 0 || rho_clr.len() != n || rho_amb.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: rho_clr.len().min(rho_amb.len()),
            });
        }
        if eps_d < 0.0 {
            return Err(Error::InvalidArgument("eps_d must be non-negative".into()));
        }
        let uniform = vec![1.0 / n as f64; n];
        let diff = rho_clr
            .iter()
            .zip(&rho_amb)
            .map(|(c, a)| (c - a).max(0.0))
            .collect();
        let (rho1, rho1_fallback) = match normalized(diff) {
            Some(r) => (r, false),
            None => (uniform.clone(), true),
        };
        let ratio = rho_clr
            .iter()
            .zip(&rho_amb)
            .map(|(c, a)| (c + eps_d) / (a + eps_d))
            .collect();
        let rho2 = normalized(ratio).unwrap_or(uniform);
        let rho = rho1.iter().zip(&rho2).map(|(a, b)| 0.5 * (a + b)).collect();
        Ok(Self {
            edges,
            rho_clr,
            rho_amb,
            rho1,
            rho2,
            rho,
            eps_d,
            rho1_fallback,
        })
    }

    /// Every density uniform over `[0, max]`.
    pub fn uniform(max: f64, n_bin: usize) -> Result<Self> {
        let edges = DistanceHistogram::edges(max, n_bin)?;
        let u = vec![1.0 / n_bin as f64; n_bin];
        Self::from_masses(edges, u.clone(), u, DEFAULT_EPS_D)
    }

    pub fn n_bin(&self) -> usize {
        self.rho.len()
    }

    pub fn bin(&self, d: f64) -> usize {
        bin_of(&self.edges, d)
    }

    /// Acceptance probability `ρ(bin(d)) / max ρ`.
    pub fn acceptance(&self, d: f64) -> f64 {
        let max = self.rho.iter().cloned().fold(0.0, f64::max);
        self.rho[self.bin(d)] / max
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "bin_left",
            "bin_right",
            "rho_clr",
            "rho_amb",
            "rho1",
            "rho2",
            "rho",
        ])?;
        for i in 0..self.n_bin() {
            let row = [
                self.edges[i],
                self.edges[i + 1],
                self.rho_clr[i],
                self.rho_amb[i],
                self.rho1[i],
                self.rho2[i],
                self.rho[i],
            ];
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Embedding distance between the two segments of a query.
pub fn pair_distance<S: Scalar>(
    model: &EmbeddingModel<S>,
    metric: DistanceMetric,
    seg0: &Segment<S>,
    seg1: &Segment<S>,
) -> Result<f64> {
    Ok(metric
        .distance(&model.encode(seg0)?, &model.encode(seg1)?)
        .as_f64())
}

/// Histograms of labeled-pair distances split into clear and no-comparison subsets.
pub fn estimate_densities<S: Scalar>(
    prefs: &PreferenceDataset<S>,
    model: &EmbeddingModel<S>,
    metric: DistanceMetric,
    n_bin: usize,
    eps_d: f64,
) -> Result<DensityModel> {
    if prefs.clear_count() == 0 || prefs.ambiguous_count() == 0 {
        return Err(Error::InsufficientLabels);
    }
    let dist =
        |t: &crate::data::PreferenceTriple<S>| pair_distance(model, metric, &t.seg0, &t.seg1);
    let clear = prefs.clear().map(dist).collect::<Result<Vec<_>>>()?;
    let amb = prefs.ambiguous().map(dist).collect::<Result<Vec<_>>>()?;
    let max = clear.iter().chain(&amb).cloned().fold(0.0, f64::max);
    let edges = DistanceHistogram::edges(max, n_bin)?;
    let h_clr = DistanceHistogram::fit(&clear, edges.clone())?;
    let h_amb = DistanceHistogram::fit(&amb, edges.clone())?;
    DensityModel::from_masses(edges, h_clr.mass, h_amb.mass, eps_d)
}

/// A candidate query with its embedding distance.
#[derive(Clone, Debug)]
pub struct Candidate<S> {
    pub seg0: Arc<Segment<S>>,
    pub seg1: Arc<Segment<S>>,
    pub distance: f64,
}

/// Indices of candidates accepted with probability `ρ(bin(d)) / max ρ`, in pool order.
pub fn accept<S>(candidates: &[Candidate<S>], density: &DensityModel, rng: &mut Rng) -> Vec<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| rng.random::<f64>() < density.acceptance(c.distance))
        .map(|(i, _)| i)
        .collect()
}

/// Up to `m` candidate indices, sorted ascending: a uniform draw from the accepted
/// set, topped up with the highest-`ρ` rejected candidates when too few pass.
pub fn rejection_sample<S>(
    candidates: &[Candidate<S>],
    density: &DensityModel,
    m: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::EmptyPool);
    }
    if m == 0 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    let accepted = accept(candidates, density, rng);
    let mut chosen: Vec<usize> = if accepted.len() > m {
        index::sample(rng, accepted.len(), m)
            .into_iter()
            .map(|k| accepted[k])
            .collect()
    } else {
        accepted
    };
    if chosen.len() < m {
        let taken: HashSet<usize> = chosen.iter().copied().collect();
        let mut rest: Vec<usize> = (0..candidates.len())
            .filter(|i| !taken.contains(i))
            .collect();
        rest.sort_by(|&a, &b| {
            let ra = density.rho[density.bin(candidates[a].distance)];
            let rb = density.rho[density.bin(candidates[b].distance)];
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let short = m - chosen.len();
        let topped = short.min(rest.len());
        log::info!(
            "rejection sampling accepted {} of {m}; topping up {topped} by density",
            chosen.len()
        );
        chosen.extend_from_slice(&rest[..topped]);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Population standard deviation of `P[σ₁ ≻ σ₀]` across ensemble members.
pub fn disagreement_score<S: Scalar>(
    ensemble: &RewardEnsemble<S>,
    seg0: &Segment<S>,
    seg1: &Segment<S>,
) -> Result<f64> {
    Ok(disagreement_scores(ensemble, &[(seg0, seg1)])?[0])
}

/// [`disagreement_score`] for many queries with shared row evaluation.
pub fn disagreement_scores<S: Scalar>(
    ensemble: &RewardEnsemble<S>,
    queries: &[(&Segment<S>, &Segment<S>)],
) -> Result<Vec<f64>> {
    if ensemble.len() < 2 {
        return Err(Error::EnsembleTooSmall(ensemble.len()));
    }
    let segs: Vec<&Segment<S>> = queries.iter().flat_map(|&(a, b)| [a, b]).collect();
    let returns = ensemble.member_returns(&segs);
    Ok((0..queries.len())
        .map(|q| {
            let probs: Vec<f64> = returns
                .iter()
                .map(|r| bt_from_returns(r[2 * q], r[2 * q + 1]).as_f64())
                .collect();
            stats::population_std(&probs)
        })
        .collect())
}

/// Indices of the `m` highest scores; ties keep the lower index first.
pub fn top_by_score(scores: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(m);
    order
}

/// How the next batch of queries is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Density-ratio rejection sampling, then disagreement ranking.
    #[default]
    Clarify,
    /// Uniform pairs.
    Random,
    /// Disagreement ranking over the whole pool.
    Disagreement,
}

/// Inputs shared by every selection call of a run.
pub struct SelectionContext<'a, S> {
    pub dataset: &'a OfflineDataset<S>,
    pub horizon: usize,
    pub prefs: &'a PreferenceDataset<S>,
    pub model: &'a EmbeddingModel<S>,
    pub metric: DistanceMetric,
    pub ensemble: &'a RewardEnsemble<S>,
}

#[derive(Clone, Debug)]
pub struct Selection<S> {
    pub queries: Vec<Query<S>>,
    pub pool_size: usize,
}

/// Up to `pool_size` distinct unlabeled pairs drawn uniformly from the dataset.
pub fn sample_pool<S: Scalar>(
    dataset: &OfflineDataset<S>,
    horizon: usize,
    prefs: &PreferenceDataset<S>,
    pool_size: usize,
    rng: &mut Rng,
) -> Result<Vec<(SegmentId, SegmentId)>> {
    let ids = sample_segment_ids(dataset, horizon, 2 * pool_size, rng)?;
    let mut seen = HashSet::new();
    let pool: Vec<_> = ids
        .chunks(2)
        .map(|p| (p[0], p[1]))
        .filter(|&(a, b)| a != b && !prefs.contains_pair(a, b) && seen.insert(pair_key(a, b)))
        .collect();
    if pool.is_empty() {
        return Err(Error::NoFreshCandidates);
    }
    Ok(pool)
}

fn materialize<S: Scalar>(
    dataset: &OfflineDataset<S>,
    horizon: usize,
    pool: &[(SegmentId, SegmentId)],
) -> Result<Vec<Query<S>>> {
    let mut cache = std::collections::HashMap::new();
    let mut get = |id: SegmentId| -> Result<Arc<Segment<S>>> {
        if let Some(s) = cache.get(&id) {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(dataset.segment(id, horizon)?);
        cache.insert(id, Arc::clone(&s));
        Ok(s)
    };
    pool.iter().map(|&(a, b)| Ok((get(a)?, get(b)?))).collect()
}

/// Chooses `m` fresh queries. `density` is required in [`SelectionMode::Clarify`].
pub fn select_queries<S: Scalar>(
    ctx: &SelectionContext<'_, S>,
    mode: SelectionMode,
    density: Option<&DensityModel>,
    m: usize,
    pool_size: usize,
    rng: &mut Rng,
) -> Result<Selection<S>> {
    if m == 0 || pool_size == 0 {
        return Err(Error::InvalidArgument(
            "M and pool size must be at least 1".into(),
        ));
    }
    let pool_ids = sample_pool(
        ctx.dataset,
        ctx.horizon,
        ctx.prefs,
        if mode == SelectionMode::Random {
            m
        } else {
            pool_size
        },
        rng,
    )?;
    let pool = materialize(ctx.dataset, ctx.horizon, &pool_ids)?;
    let pool_size = pool.len();
    let shortlist: Vec<usize> = match mode {
        SelectionMode::Random => (0..pool.len()).collect(),
        SelectionMode::Disagreement => {
            let refs: Vec<_> = pool.iter().map(|(a, b)| (a.as_ref(), b.as_ref())).collect();
            top_by_score(&disagreement_scores(ctx.ensemble, &refs)?, m)
        }
        SelectionMode::Clarify => {
            let density = density.ok_or_else(|| {
                Error::InvalidArgument("clarify selection needs a density".into())
            })?;
            let candidates = pool
                .iter()
                .map(|(a, b)| {
                    let distance = pair_distance(ctx.model, ctx.metric, a, b)?;
                    Ok(Candidate {
                        seg0: Arc::clone(a),
                        seg1: Arc::clone(b),
                        distance,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let inter = rejection_sample(&candidates, density, 4 * m, rng)?;
            let refs: Vec<_> = inter
                .iter()
                .map(|&i| (pool[i].0.as_ref(), pool[i].1.as_ref()))
                .collect();
            let scores = disagreement_scores(ctx.ensemble, &refs)?;
            top_by_score(&scores, m)
                .into_iter()
                .map(|k| inter[k])
                .collect()
        }
    };
    let queries = shortlist
        .into_iter()
        .take(m)
        .map(|i| pool[i].clone())
        .collect();
    Ok(Selection { queries, pool_size })
}
