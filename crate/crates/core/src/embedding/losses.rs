use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metric::DistanceMetric;
use super::model::{EmbeddingMode, EmbeddingModel};
use crate::data::{PreferenceTriple, Segment, SegmentId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_amb: f64,
    pub lambda_quad: f64,
    pub lambda_norm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_amb: 0.1,
            lambda_quad: 1.0,
            lambda_norm: 0.1,
        }
    }
}

impl LossWeights {
    /// `recon + λ_amb amb + λ_quad quad + λ_norm norm`.
    pub fn combine<S: Scalar>(&self, v: &LossValues<S>) -> S {
        v.recon
            + S::lit(self.lambda_amb) * v.amb
            + S::lit(self.lambda_quad) * v.quad
            + S::lit(self.lambda_norm) * v.norm
    }

    pub fn validate(&self) -> Result<()> {
        if [self.lambda_amb, self.lambda_quad, self.lambda_norm]
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::Config(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Component values and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct LossValues<S> {
    pub recon: S,
    pub amb: S,
    pub quad: S,
    pub norm: S,
    pub total: S,
}

impl<S: Scalar> LossValues<S> {
    pub fn to_f64(&self) -> LossValues<f64> {
        LossValues {
            recon: self.recon.as_f64(),
            amb: self.amb.as_f64(),
            quad: self.quad.as_f64(),
            norm: self.norm.as_f64(),
            total: self.total.as_f64(),
        }
    }
}

fn add_pair_grad<S: Scalar>(
    metric: DistanceMetric,
    z: &[Vec<S>],
    a: usize,
    b: usize,
    scale: S,
    dz: &mut [Vec<S>],
) {
    let g = metric.grad_a(&z[a], &z[b]);
    for (k, gk) in g.into_iter().enumerate() {
        dz[a][k] += scale * gk;
        dz[b][k] -= scale * gk;
    }
}

/// `−mean_clear ℓ + mean_amb ℓ`; an empty subset contributes zero.
/// Adds `weight · ∂L/∂z` into `dz`.
pub fn amb_on_embeddings<S: Scalar>(
    metric: DistanceMetric,
    z: &[Vec<S>],
    clear: &[(usize, usize)],
    ambiguous: &[(usize, usize)],
    weight: S,
    dz: &mut [Vec<S>],
) -> S {
    let mut value = S::zero();
    for (pairs, sign) in [(clear, -S::one()), (ambiguous, S::one())] {
        if pairs.is_empty() {
            continue;
        }
        let n = S::from_count(pairs.len());
        for &(a, b) in pairs {
            value += sign * metric.distance(&z[a], &z[b]) / n;
            add_pair_grad(metric, z, a, b, weight * sign / n, dz);
        }
    }
    value
}

/// `−mean[ℓ(z⁺, z⁻′) + ℓ(z⁺′, z⁻) − ℓ(z⁺, z⁺′) − ℓ(z⁻, z⁻′)]` over quadruples `[z⁺, z⁻, z⁺′, z⁻′]`.
pub fn quad_on_embeddings<S: Scalar>(
    metric: DistanceMetric,
    z: &[Vec<S>],
    quads: &[[usize; 4]],
    weight: S,
    dz: &mut [Vec<S>],
) -> S {
    if quads.is_empty() {
        return S::zero();
    }
    let n = S::from_count(quads.len());
    let mut value = S::zero();
    for &[p, m, p2, m2] in quads {
        for (a, b, sign) in [
            (p, m2, -S::one()),
            (p2, m, -S::one()),
            (p, p2, S::one()),
            (m, m2, S::one()),
        ] {
            value += sign * metric.distance(&z[a], &z[b]) / n;
            add_pair_grad(metric, z, a, b, weight * sign / n, dz);
        }
    }
    value
}

/// `mean max(‖z‖, 1)`; at `‖z‖ = 1` the gradient is taken from the norm branch.
pub fn norm_on_embeddings<S: Scalar>(
    z: &[Vec<S>],
    idx: &[usize],
    weight: S,
    dz: &mut [Vec<S>],
) -> S {
    if idx.is_empty() {
        return S::zero();
    }
    let n = S::from_count(idx.len());
    let mut value = S::zero();
    for &i in idx {
        let norm = z[i].iter().map(|&v| v * v).sum::<S>().sqrt();
        if norm >= S::one() {
            value += norm / n;
            for (o, &v) in dz[i].iter_mut().zip(&z[i]) {
                *o += weight * v / (norm * n);
            }
        } else {
            value += S::one() / n;
        }
    }
    value
}

/// Segments and transitions entering one loss evaluation.
#[derive(Clone, Debug, Default)]
pub struct LossBatch<'a, S> {
    /// Mixed clear and ambiguous triples; split by label.
    pub amb: Vec<&'a PreferenceTriple<S>>,
    /// Pairs of clear triples.
    pub quad: Vec<(&'a PreferenceTriple<S>, &'a PreferenceTriple<S>)>,
    pub norm: Vec<&'a Segment<S>>,
    /// `(segment, step)` transitions for reconstruction.
    pub recon: Vec<(&'a Segment<S>, usize)>,
}

#[derive(Default)]
struct Slots<'a, S> {
    index: BTreeMap<SegmentId, usize>,
    segs: Vec<&'a Segment<S>>,
}

impl<'a, S> Slots<'a, S> {
    fn slot(&mut self, seg: &'a Segment<S>) -> usize {
        let next = self.segs.len();
        let i = *self.index.entry(seg.id).or_insert(next);
        if i == next {
            self.segs.push(seg);
        }
        i
    }
}

/// Which components to weight; `None` drops the term entirely.
#[derive(Clone, Copy)]
struct TermWeights<S> {
    recon: Option<S>,
    amb: Option<S>,
    quad: Option<S>,
    norm: Option<S>,
}

fn evaluate<S: Scalar>(
    model: &EmbeddingModel<S>,
    batch: &LossBatch<'_, S>,
    w: TermWeights<S>,
    metric: DistanceMetric,
) -> Result<(LossValues<S>, Vec<S>)> {
    let mut slots = Slots {
        index: BTreeMap::new(),
        segs: Vec::new(),
    };
    let mut clear = Vec::new();
    let mut ambiguous = Vec::new();
    if w.amb.is_some() {
        for t in &batch.amb {
            let pair = (slots.slot(&t.seg0), slots.slot(&t.seg1));
            if t.label.is_clear() {
                clear.push(pair);
            } else {
                ambiguous.push(pair);
            }
        }
    }
    let mut quads = Vec::new();
    if w.quad.is_some() {
        for (t, u) in &batch.quad {
            let (Some((p, m)), Some((p2, m2))) = (t.ranked(), u.ranked()) else {
                return Err(Error::AmbiguousInQuadBatch);
            };
            quads.push([slots.slot(p), slots.slot(m), slots.slot(p2), slots.slot(m2)]);
        }
    }
    let norm_idx: Vec<usize> = if w.norm.is_some() {
        batch.norm.iter().map(|s| slots.slot(s)).collect()
    } else {
        Vec::new()
    };
    let use_recon = w.recon.is_some() && model.mode() == EmbeddingMode::Encoder;
    let recon_idx: Vec<usize> = if use_recon {
        batch.recon.iter().map(|(s, _)| slots.slot(s)).collect()
    } else {
        Vec::new()
    };

    let enc = model.encode_batch(&slots.segs)?;
    let mut dz = vec![vec![S::zero(); model.dim()]; slots.segs.len()];
    let mut grads = vec![S::zero(); model.num_params()];
    let mut v = LossValues::default();
    if let Some(wa) = w.amb {
        v.amb = amb_on_embeddings(metric, &enc.z, &clear, &ambiguous, wa, &mut dz);
    }
    if let Some(wq) = w.quad {
        v.quad = quad_on_embeddings(metric, &enc.z, &quads, wq, &mut dz);
    }
    if let Some(wn) = w.norm {
        v.norm = norm_on_embeddings(&enc.z, &norm_idx, wn, &mut dz);
    }
    if let (true, Some(wr)) = (use_recon, w.recon) {
        if !recon_idx.is_empty() {
            let n = S::from_count(recon_idx.len());
            for (&(seg, t), &i) in batch.recon.iter().zip(&recon_idx) {
                let (err, gz) = model.recon_term(
                    &seg.states[t],
                    &seg.actions[t],
                    &enc.z[i],
                    wr / n,
                    &mut grads,
                )?;
                v.recon += err / n;
                for (o, g) in dz[i].iter_mut().zip(gz) {
                    *o += g;
                }
            }
        }
    }
    model.backward(&enc, &dz, &mut grads);
    let weighted = |x: S, o: Option<S>| o.map_or(S::zero(), |k| k * x);
    v.total = weighted(v.recon, if use_recon { w.recon } else { None })
        + weighted(v.amb, w.amb)
        + weighted(v.quad, w.quad)
        + weighted(v.norm, w.norm);
    Ok((v, grads))
}

fn only<S: Scalar>(recon: bool, amb: bool, quad: bool, norm: bool) -> TermWeights<S> {
    let on = |b: bool| b.then(S::one);
    TermWeights {
        recon: on(recon),
        amb: on(amb),
        quad: on(quad),
        norm: on(norm),
    }
}

/// Ambiguity loss and its parameter gradient.
pub fn loss_amb<S: Scalar>(
    model: &EmbeddingModel<S>,
    triples: &[&PreferenceTriple<S>],
    metric: DistanceMetric,
) -> Result<(S, Vec<S>)> {
    let batch = LossBatch {
        amb: triples.to_vec(),
        ..Default::default()
    };
    evaluate(model, &batch, only(false, true, false, false), metric).map(|(v, g)| (v.amb, g))
}

/// Quadrilateral loss over pairs of clear triples.
pub fn loss_quad<S: Scalar>(
    model: &EmbeddingModel<S>,
    pairs: &[(&PreferenceTriple<S>, &PreferenceTriple<S>)],
    metric: DistanceMetric,
) -> Result<(S, Vec<S>)> {
    let batch = LossBatch {
        quad: pairs.to_vec(),
        ..Default::default()
    };
    evaluate(model, &batch, only(false, false, true, false), metric).map(|(v, g)| (v.quad, g))
}

pub fn loss_norm<S: Scalar>(
    model: &EmbeddingModel<S>,
    segments: &[&Segment<S>],
) -> Result<(S, Vec<S>)> {
    let batch = LossBatch {
        norm: segments.to_vec(),
        ..Default::default()
    };
    evaluate(
        model,
        &batch,
        only(false, false, false, true),
        DistanceMetric::L2,
    )
    .map(|(v, g)| (v.norm, g))
}

/// Mean action reconstruction error; defined for encoder models only.
pub fn loss_recon<S: Scalar>(
    model: &EmbeddingModel<S>,
    transitions: &[(&Segment<S>, usize)],
) -> Result<(S, Vec<S>)> {
    if model.mode() == EmbeddingMode::Table {
        return Err(Error::ReconstructionUndefined);
    }
    let batch = LossBatch {
        recon: transitions.to_vec(),
        ..Default::default()
    };
    evaluate(
        model,
        &batch,
        only(true, false, false, false),
        DistanceMetric::L2,
    )
    .map(|(v, g)| (v.recon, g))
}

/// `L_recon + λ_amb L_amb + λ_quad L_quad + λ_norm L_norm`; table models omit `L_recon`.
pub fn total_loss<S: Scalar>(
    model: &EmbeddingModel<S>,
    batch: &LossBatch<'_, S>,
    weights: &LossWeights,
    metric: DistanceMetric,
) -> Result<(LossValues<S>, Vec<S>)> {
    let w = TermWeights {
        recon: Some(S::one()),
        amb: Some(S::lit(weights.lambda_amb)),
        quad: Some(S::lit(weights.lambda_quad)),
        norm: Some(S::lit(weights.lambda_norm)),
    };
    evaluate(model, batch, w, metric)
}
