//! Bradley-Terry reward ensembles, preference cross-entropy training,
//! relabeling, tabular policy optimization and evaluation.

mod eval;
mod rows;
mod vi;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{OfflineDataset, PreferenceDataset, PreferenceTriple, Segment};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, Trace};
use crate::optim::{Optimizer, OptimizerKind};
use crate::scalar::{sigmoid, softplus, Scalar};
use crate::seed::{self, Rng};

pub use eval::{evaluate_reward, tabular_reward, EvalMetrics, FnReward, HeldOut};
pub use rows::{weighted_sum, RowCounts, RowTable};
pub use vi::{value_iteration, value_iteration_table, ValueIteration};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub hidden: Vec<usize>,
    pub ensemble_size: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub updates: usize,
    pub optimizer: OptimizerKind,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256, 256],
            ensemble_size: 3,
            lr: 3e-4,
            batch_size: 128,
            updates: 50,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 || self.batch_size == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(
                "reward ensemble_size, batch_size and hidden widths must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "reward lr {} must be positive",
                self.lr
            )));
        }
        Ok(())
    }
}

/// Anything that assigns a per-step reward.
pub trait ReturnModel<S: Scalar> {
    fn step_reward(&self, state: &[S], action: &[S]) -> S;

    fn segment_return(&self, seg: &Segment<S>) -> S {
        crate::data::segment_return(seg, |s, a| self.step_reward(s, a))
    }
}

/// `r̂(s, a)`: ReLU MLP over `[state; action]` squashed by a final tanh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RewardNet<S> {
    pub mlp: Mlp<S>,
}

impl<S: Scalar> RewardNet<S> {
    pub fn new(input_dim: usize, hidden: &[usize], rng: &mut Rng) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self {
            mlp: Mlp::new(&sizes, Activation::Relu, Activation::Tanh, rng),
        }
    }

    pub fn reward(&self, row: &[S]) -> S {
        self.mlp.forward(row)[0]
    }

    pub fn row_rewards(&self, rows: &[Vec<S>]) -> Vec<S> {
        rows.iter().map(|r| self.reward(r)).collect()
    }
}

impl<S: Scalar> ReturnModel<S> for RewardNet<S> {
    fn step_reward(&self, state: &[S], action: &[S]) -> S {
        let row: Vec<S> = state.iter().chain(action).copied().collect();
        self.reward(&row)
    }
}

/// Independently initialized reward nets averaged into one reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RewardEnsemble<S> {
    members: Vec<RewardNet<S>>,
    optimizers: Vec<Optimizer<S>>,
}

impl<S: Scalar> RewardEnsemble<S> {
    pub fn new(input_dim: usize, cfg: &RewardConfig, rng: &mut Rng) -> Self {
        let members = (0..cfg.ensemble_size)
            .map(|_| RewardNet::new(input_dim, &cfg.hidden, rng))
            .collect();
        Self::from_members(members, cfg.optimizer, S::lit(cfg.lr))
    }

    pub fn from_members(members: Vec<RewardNet<S>>, kind: OptimizerKind, lr: S) -> Self {
        let optimizers = members
            .iter()
            .map(|m| Optimizer::new(kind, lr, m.mlp.num_params()))
            .collect();
        Self {
            members,
            optimizers,
        }
    }

    pub fn members(&self) -> &[RewardNet<S>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn set_lr(&mut self, lr: S) {
        self.optimizers.iter_mut().for_each(|o| o.lr = lr);
    }

    /// Mean member reward of each row.
    pub fn row_rewards(&self, rows: &[Vec<S>]) -> Vec<S> {
        let k = S::from_count(self.members.len());
        let mut acc = vec![S::zero(); rows.len()];
        for m in &self.members {
            for (a, r) in acc.iter_mut().zip(m.row_rewards(rows)) {
                *a += r;
            }
        }
        acc.into_iter().map(|v| v / k).collect()
    }

    /// Segment returns per member, `out[member][segment]`.
    pub fn member_returns(&self, segs: &[&Segment<S>]) -> Vec<Vec<S>> {
        let mut table = RowTable::new();
        let counts: Vec<RowCounts<S>> = segs.iter().map(|s| table.segment_counts(s)).collect();
        self.members
            .iter()
            .map(|m| {
                let r = m.row_rewards(table.rows());
                counts.iter().map(|c| weighted_sum(c, &r)).collect()
            })
            .collect()
    }
}

impl<S: Scalar> ReturnModel<S> for RewardEnsemble<S> {
    fn step_reward(&self, state: &[S], action: &[S]) -> S {
        let row: Vec<S> = state.iter().chain(action).copied().collect();
        self.row_rewards(&[row])[0]
    }

    fn segment_return(&self, seg: &Segment<S>) -> S {
        let per_member = self.member_returns(&[seg]);
        per_member.iter().map(|r| r[0]).sum::<S>() / S::from_count(self.members.len())
    }
}

/// `P[σ₁ ≻ σ₀]` from the two returns.
pub fn bt_from_returns<S: Scalar>(r0: S, r1: S) -> S {
    sigmoid(r1 - r0)
}

/// `P[σ₁ ≻ σ₀] = exp R₁ / (exp R₀ + exp R₁)` evaluated as a logistic of the difference.
pub fn bt_probability<S: Scalar, M: ReturnModel<S> + ?Sized>(
    model: &M,
    seg0: &Segment<S>,
    seg1: &Segment<S>,
) -> S {
    bt_from_returns(model.segment_return(seg0), model.segment_return(seg1))
}

/// A clear triple in row-count form: `(counts₀, counts₁, p)`.
struct CountedTriple<S> {
    c0: RowCounts<S>,
    c1: RowCounts<S>,
    target: S,
}

fn count_triples<S: Scalar>(
    triples: &[&PreferenceTriple<S>],
    table: &mut RowTable<S>,
) -> Vec<CountedTriple<S>> {
    triples
        .iter()
        .filter_map(|t| {
            let p = t.label.target()?;
            Some(CountedTriple {
                c0: table.segment_counts(&t.seg0),
                c1: table.segment_counts(&t.seg1),
                target: S::from_count(p as usize),
            })
        })
        .collect()
}

/// Mean cross-entropy over `batch`, accumulating `∂L/∂θ` into `grads`.
fn ce_on_counts<S: Scalar>(
    net: &Mlp<S>,
    rows: &[Vec<S>],
    batch: &[&CountedTriple<S>],
    grads: &mut [S],
) -> S {
    let mut local: BTreeMap<usize, usize> = BTreeMap::new();
    for t in batch {
        for &(r, _) in t.c0.iter().chain(&t.c1) {
            let next = local.len();
            local.entry(r).or_insert(next);
        }
    }
    let mut traces: Vec<Option<Trace<S>>> = vec![None; local.len()];
    let mut rewards = vec![S::zero(); local.len()];
    for (&r, &i) in &local {
        let tr = net.forward_trace(&rows[r]);
        rewards[i] = tr.output()[0];
        traces[i] = Some(tr);
    }
    let ret = |c: &RowCounts<S>| c.iter().map(|&(r, n)| n * rewards[local[&r]]).sum::<S>();
    let n = S::from_count(batch.len());
    let mut loss = S::zero();
    let mut d_reward = vec![S::zero(); local.len()];
    for t in batch {
        let delta = ret(&t.c1) - ret(&t.c0);
        // -[p ln σ(Δ) + (1-p) ln σ(-Δ)] = softplus(Δ) - pΔ
        loss += softplus(delta) - t.target * delta;
        let g = (sigmoid(delta) - t.target) / n;
        for &(r, c) in &t.c1 {
            d_reward[local[&r]] += g * c;
        }
        for &(r, c) in &t.c0 {
            d_reward[local[&r]] -= g * c;
        }
    }
    for (i, tr) in traces.iter().enumerate() {
        if d_reward[i] != S::zero() {
            net.backward(tr.as_ref().unwrap(), &[d_reward[i]], grads);
        }
    }
    loss / n
}

/// Preference cross-entropy of one net over the clear triples of `batch`, with its parameter gradient.
pub fn ce_loss<S: Scalar>(
    net: &RewardNet<S>,
    batch: &[&PreferenceTriple<S>],
) -> Result<(S, Vec<S>)> {
    let mut table = RowTable::new();
    let counted = count_triples(batch, &mut table);
    if counted.is_empty() {
        return Err(Error::NoTrainableLabels);
    }
    let refs: Vec<&CountedTriple<S>> = counted.iter().collect();
    let mut grads = vec![S::zero(); net.mlp.num_params()];
    let loss = ce_on_counts(&net.mlp, table.rows(), &refs, &mut grads);
    Ok((loss, grads))
}

/// Trains every member for `updates` steps on its own shuffle of the clear triples.
///
/// Returns the member-averaged batch loss of each update.
pub fn train_reward<S: Scalar>(
    ensemble: &mut RewardEnsemble<S>,
    prefs: &PreferenceDataset<S>,
    updates: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let clear: Vec<&PreferenceTriple<S>> = prefs.clear().collect();
    if clear.is_empty() {
        return Err(Error::NoTrainableLabels);
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let mut table = RowTable::new();
    let counted = count_triples(&clear, &mut table);
    let rows = table.rows();
    let b = batch_size.min(counted.len());
    let mut trace = vec![0.0; updates];
    for (m, (member, opt)) in ensemble
        .members
        .iter_mut()
        .zip(&mut ensemble.optimizers)
        .enumerate()
    {
        let mut rng = seed::stream(seed, m as u64, 0);
        let mut order: Vec<usize> = (0..counted.len()).collect();
        let mut cursor = order.len();
        let mut grads = vec![S::zero(); member.mlp.num_params()];
        for slot in trace.iter_mut() {
            let mut batch = Vec::with_capacity(b);
            while batch.len() < b {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                batch.push(&counted[order[cursor]]);
                cursor += 1;
            }
            grads.iter_mut().for_each(|g| *g = S::zero());
            let loss = ce_on_counts(&member.mlp, rows, &batch, &mut grads);
            opt.step(member.mlp.params_mut(), &grads);
            *slot += loss.as_f64();
        }
    }
    let k = ensemble.len() as f64;
    Ok(trace.into_iter().map(|v| v / k).collect())
}

/// Affine map sending the dataset's minimum and maximum learned reward to 0 and 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Self {
        values.into_iter().fold(
            Self {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            },
            |m, v| Self {
                min: m.min.min(v),
                max: m.max.max(v),
            },
        )
    }

    /// Constant inputs map to 0.5.
    pub fn apply(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v - self.min) / (self.max - self.min)
        } else {
            0.5
        }
    }
}

/// Dataset rewards replaced by the normalized learned reward.
#[derive(Clone, Debug, PartialEq)]
pub struct Relabeled {
    pub rewards: Vec<Vec<f64>>,
    pub scale: MinMax,
}

pub fn normalize_rewards(raw: Vec<Vec<f64>>) -> Relabeled {
    let scale = MinMax::fit(raw.iter().flatten().copied());
    let rewards = raw
        .into_iter()
        .map(|ep| ep.into_iter().map(|v| scale.apply(v)).collect())
        .collect();
    Relabeled { rewards, scale }
}

pub fn relabel_dataset<S: Scalar>(
    ensemble: &RewardEnsemble<S>,
    dataset: &OfflineDataset<S>,
) -> Relabeled {
    let mut table = RowTable::new();
    let ids: Vec<Vec<usize>> = dataset
        .episodes
        .iter()
        .map(|ep| {
            ep.states
                .iter()
                .zip(&ep.actions)
                .map(|(s, a)| table.intern(s.iter().chain(a).copied().collect()))
                .collect()
        })
        .collect();
    let r = ensemble.row_rewards(table.rows());
    normalize_rewards(
        ids.into_iter()
            .map(|ep| ep.into_iter().map(|i| r[i].as_f64()).collect())
            .collect(),
    )
}
