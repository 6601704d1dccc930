use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Segment, SegmentId};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, Trace};
use crate::scalar::Scalar;
use crate::seed::Rng;

/// One free vector per known segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TableEmbedding<S> {
    dim: usize,
    /// Sorted, unique.
    ids: Vec<SegmentId>,
    values: Vec<S>,
}

/// Mean-pooled segment features to `z`, plus the `(state, z) → action` decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct EncoderEmbedding<S> {
    dim: usize,
    state_dim: usize,
    action_dim: usize,
    encoder: Mlp<S>,
    decoder: Mlp<S>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    Table,
    Encoder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            decoder_hidden: vec![64, 64],
        }
    }
}

/// Segment-to-vector map `f_φ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", tag = "mode", rename_all = "snake_case")]
pub enum EmbeddingModel<S> {
    Table(TableEmbedding<S>),
    Encoder(EncoderEmbedding<S>),
}

/// Forward state of the segments touched by one loss evaluation.
pub(crate) struct Encoded<S> {
    pub z: Vec<Vec<S>>,
    rows: Vec<usize>,
    traces: Vec<Trace<S>>,
}

impl<S: Scalar> EmbeddingModel<S> {
    /// Table over `ids` (sorted and deduplicated) with standard-normal entries drawn in id order.
    pub fn table(ids: impl IntoIterator<Item = SegmentId>, dim: usize, rng: &mut Rng) -> Self {
        let mut ids: Vec<SegmentId> = ids.into_iter().collect();
        ids.sort();
        ids.dedup();
        let values = (0..ids.len() * dim)
            .map(|_| S::lit(StandardNormal.sample(rng)))
            .collect();
        Self::Table(TableEmbedding { dim, ids, values })
    }

    /// Table with the given vectors.
    pub fn table_from(entries: Vec<(SegmentId, Vec<S>)>) -> Result<Self> {
        let dim = entries.first().map_or(0, |e| e.1.len());
        let mut entries = entries;
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument(
                "duplicate segment id in embedding table".into(),
            ));
        }
        if let Some(bad) = entries.iter().find(|e| e.1.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: bad.1.len(),
            });
        }
        let ids = entries.iter().map(|e| e.0).collect();
        let values = entries.into_iter().flat_map(|e| e.1).collect();
        Ok(Self::Table(TableEmbedding { dim, ids, values }))
    }

    pub fn encoder(
        state_dim: usize,
        action_dim: usize,
        dim: usize,
        cfg: &EncoderConfig,
        rng: &mut Rng,
    ) -> Self {
        let mut enc = vec![state_dim + action_dim];
        enc.extend_from_slice(&cfg.hidden);
        enc.push(dim);
        let mut dec = vec![state_dim + dim];
        dec.extend_from_slice(&cfg.decoder_hidden);
        dec.push(action_dim);
        Self::Encoder(EncoderEmbedding {
            dim,
            state_dim,
            action_dim,
            encoder: Mlp::new(&enc, Activation::Tanh, Activation::Identity, rng),
            decoder: Mlp::new(&dec, Activation::Tanh, Activation::Identity, rng),
        })
    }

    /// Encoder and decoder with every parameter zero.
    pub fn encoder_zeros(
        state_dim: usize,
        action_dim: usize,
        dim: usize,
        cfg: &EncoderConfig,
    ) -> Self {
        let mut m = Self::encoder(state_dim, action_dim, dim, cfg, &mut crate::seed::rng(0));
        m.blocks_mut()
            .into_iter()
            .for_each(|b| b.iter_mut().for_each(|p| *p = S::zero()));
        m
    }

    pub fn mode(&self) -> EmbeddingMode {
        match self {
            Self::Table(_) => EmbeddingMode::Table,
            Self::Encoder(_) => EmbeddingMode::Encoder,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Table(t) => t.dim,
            Self::Encoder(e) => e.dim,
        }
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// Parameter blocks in gradient order.
    pub fn blocks(&self) -> Vec<&[S]> {
        match self {
            Self::Table(t) => vec![&t.values],
            Self::Encoder(e) => vec![e.encoder.params(), e.decoder.params()],
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [S]> {
        match self {
            Self::Table(t) => vec![&mut t.values],
            Self::Encoder(e) => vec![e.encoder.params_mut(), e.decoder.params_mut()],
        }
    }

    /// Parameter `i` of the flat gradient layout.
    pub fn param_mut(&mut self, mut i: usize) -> &mut S {
        for b in self.blocks_mut() {
            if i < b.len() {
                return &mut b[i];
            }
            i -= b.len();
        }
        panic!("parameter index out of range");
    }

    fn table_row(t: &TableEmbedding<S>, id: SegmentId) -> Result<usize> {
        t.ids
            .binary_search(&id)
            .map_err(|_| Error::UnknownSegment(id))
    }

    fn check_features(e: &EncoderEmbedding<S>, seg: &Segment<S>) -> Result<()> {
        if seg.state_dim() != e.state_dim {
            return Err(Error::Dimension {
                expected: e.state_dim,
                found: seg.state_dim(),
            });
        }
        if seg.action_dim() != e.action_dim {
            return Err(Error::Dimension {
                expected: e.action_dim,
                found: seg.action_dim(),
            });
        }
        Ok(())
    }

    pub fn encode(&self, seg: &Segment<S>) -> Result<Vec<S>> {
        match self {
            Self::Table(t) => {
                let r = Self::table_row(t, seg.id)?;
                Ok(t.values[r * t.dim..(r + 1) * t.dim].to_vec())
            }
            Self::Encoder(e) => {
                Self::check_features(e, seg)?;
                Ok(e.encoder.forward(&seg.pooled_features()))
            }
        }
    }

    /// Table entry by id.
    pub fn table_entry(&self, id: SegmentId) -> Result<Vec<S>> {
        match self {
            Self::Table(t) => {
                let r = Self::table_row(t, id)?;
                Ok(t.values[r * t.dim..(r + 1) * t.dim].to_vec())
            }
            Self::Encoder(_) => Err(Error::InvalidArgument(
                "encoder models have no table".into(),
            )),
        }
    }

    pub(crate) fn encode_batch(&self, segs: &[&Segment<S>]) -> Result<Encoded<S>> {
        let mut out = Encoded {
            z: Vec::with_capacity(segs.len()),
            rows: Vec::new(),
            traces: Vec::new(),
        };
        for seg in segs {
            match self {
                Self::Table(t) => {
                    let r = Self::table_row(t, seg.id)?;
                    out.z.push(t.values[r * t.dim..(r + 1) * t.dim].to_vec());
                    out.rows.push(r);
                }
                Self::Encoder(e) => {
                    Self::check_features(e, seg)?;
                    let tr = e.encoder.forward_trace(&seg.pooled_features());
                    out.z.push(tr.output().to_vec());
                    out.traces.push(tr);
                }
            }
        }
        Ok(out)
    }

    /// Adds `Σ_i ∂L/∂z_i · ∂z_i/∂θ` into `grads`.
    pub(crate) fn backward(&self, enc: &Encoded<S>, dz: &[Vec<S>], grads: &mut [S]) {
        match self {
            Self::Table(t) => {
                for (&r, g) in enc.rows.iter().zip(dz) {
                    for (o, &v) in grads[r * t.dim..(r + 1) * t.dim].iter_mut().zip(g) {
                        *o += v;
                    }
                }
            }
            Self::Encoder(e) => {
                let n = e.encoder.num_params();
                for (tr, g) in enc.traces.iter().zip(dz) {
                    if g.iter().any(|v| *v != S::zero()) {
                        e.encoder.backward(tr, g, &mut grads[..n]);
                    }
                }
            }
        }
    }

    /// Decoder prediction of the action at step `t` given the segment embedding.
    pub fn decode(&self, state: &[S], z: &[S]) -> Result<Vec<S>> {
        match self {
            Self::Table(_) => Err(Error::ReconstructionUndefined),
            Self::Encoder(e) => {
                let input: Vec<S> = state.iter().chain(z).copied().collect();
                Ok(e.decoder.forward(&input))
            }
        }
    }

    /// Reconstruction error `‖dec(s, z) − a‖₂`; adds decoder gradients into `grads`
    /// and returns `∂/∂z` scaled by `weight`.
    pub(crate) fn recon_term(
        &self,
        state: &[S],
        action: &[S],
        z: &[S],
        weight: S,
        grads: &mut [S],
    ) -> Result<(S, Vec<S>)> {
        let Self::Encoder(e) = self else {
            return Err(Error::ReconstructionUndefined);
        };
        let input: Vec<S> = state.iter().chain(z).copied().collect();
        let tr = e.decoder.forward_trace(&input);
        let diff: Vec<S> = tr
            .output()
            .iter()
            .zip(action)
            .map(|(&p, &a)| p - a)
            .collect();
        let err = diff.iter().map(|&d| d * d).sum::<S>().sqrt();
        if err == S::zero() {
            return Ok((err, vec![S::zero(); z.len()]));
        }
        let g: Vec<S> = diff.iter().map(|&d| weight * d / err).collect();
        let n = e.encoder.num_params();
        let gin = e.decoder.backward(&tr, &g, &mut grads[n..]);
        Ok((err, gin[e.state_dim..].to_vec()))
    }
}
