//! Segments, offline trajectories, preference triples and window sampling.

mod io;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::{self, Rng};

pub use io::{load_offline, load_preferences, save_offline, save_preferences, SCHEMA_VERSION};

/// Identity of a window: the episode it was cut from and its first step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentId {
    pub episode: usize,
    pub start: usize,
}

impl SegmentId {
    pub fn new(episode: usize, start: usize) -> Self {
        Self { episode, start }
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.episode, self.start)
    }
}

/// Fixed-length window of `(state, action)` pairs with its hidden rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment<S> {
    pub id: SegmentId,
    pub states: Vec<Vec<S>>,
    pub actions: Vec<Vec<S>>,
    pub rewards_hidden: Vec<S>,
    pub true_return: S,
}

fn check_dims<S>(rows: &[Vec<S>], what: &str) -> Result<()> {
    if let Some(first) = rows.first() {
        if let Some(bad) = rows.iter().find(|r| r.len() != first.len()) {
            return Err(Error::InvalidArgument(format!(
                "{what} dimension changes within a sequence ({} vs {})",
                first.len(),
                bad.len()
            )));
        }
    }
    Ok(())
}

impl<S: Scalar> Segment<S> {
    pub fn new(
        id: SegmentId,
        states: Vec<Vec<S>>,
        actions: Vec<Vec<S>>,
        rewards_hidden: Vec<S>,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidArgument(
                "segment must have at least one step".into(),
            ));
        }
        if states.len() != actions.len() || states.len() != rewards_hidden.len() {
            return Err(Error::InvalidArgument(format!(
                "segment sequences disagree in length: {} states, {} actions, {} rewards",
                states.len(),
                actions.len(),
                rewards_hidden.len()
            )));
        }
        check_dims(&states, "state")?;
        check_dims(&actions, "action")?;
        let true_return = rewards_hidden.iter().copied().sum();
        Ok(Self {
            id,
            states,
            actions,
            rewards_hidden,
            true_return,
        })
    }

    /// Horizon `H`.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn source_episode(&self) -> usize {
        self.id.episode
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn action_dim(&self) -> usize {
        self.actions[0].len()
    }

    /// `[state_t; action_t]`.
    pub fn step_input(&self, t: usize) -> Vec<S> {
        let mut v = Vec::with_capacity(self.state_dim() + self.action_dim());
        v.extend_from_slice(&self.states[t]);
        v.extend_from_slice(&self.actions[t]);
        v
    }

    /// Per-step `[state; action]` averaged over the window.
    pub fn pooled_features(&self) -> Vec<S> {
        let ds = self.state_dim();
        let mut acc = vec![S::zero(); ds + self.action_dim()];
        for (s, a) in self.states.iter().zip(&self.actions) {
            for (o, v) in acc.iter_mut().zip(s.iter().chain(a.iter())) {
                *o += *v;
            }
        }
        let n = S::from_count(self.len());
        acc.iter_mut().for_each(|v| *v /= n);
        acc
    }
}

/// Two segments shown together for comparison.
pub type Query<S> = (Arc<Segment<S>>, Arc<Segment<S>>);

/// `Σ_t reward(s_t, a_t)` over a segment.
pub fn segment_return<S: Scalar>(segment: &Segment<S>, reward: impl Fn(&[S], &[S]) -> S) -> S {
    segment
        .states
        .iter()
        .zip(&segment.actions)
        .map(|(s, a)| reward(s, a))
        .sum()
}

/// One trajectory of the offline dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode<S> {
    pub states: Vec<Vec<S>>,
    pub actions: Vec<Vec<S>>,
    pub rewards_hidden: Vec<S>,
}

impl<S: Scalar> Episode<S> {
    pub fn new(states: Vec<Vec<S>>, actions: Vec<Vec<S>>, rewards_hidden: Vec<S>) -> Result<Self> {
        if states.len() != actions.len() || states.len() != rewards_hidden.len() {
            return Err(Error::InvalidArgument(format!(
                "episode sequences disagree in length: {} states, {} actions, {} rewards",
                states.len(),
                actions.len(),
                rewards_hidden.len()
            )));
        }
        check_dims(&states, "state")?;
        check_dims(&actions, "action")?;
        Ok(Self {
            states,
            actions,
            rewards_hidden,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn episode_return(&self) -> S {
        self.rewards_hidden.iter().copied().sum()
    }

    /// Window `[start, start + h)` as a segment of episode `index`.
    pub fn window(&self, index: usize, start: usize, h: usize) -> Result<Segment<S>> {
        if start + h > self.len() {
            return Err(Error::InvalidArgument(format!(
                "window {start}+{h} exceeds episode length {}",
                self.len()
            )));
        }
        Segment::new(
            SegmentId::new(index, start),
            self.states[start..start + h].to_vec(),
            self.actions[start..start + h].to_vec(),
            self.rewards_hidden[start..start + h].to_vec(),
        )
    }
}

/// Reward-free trajectories (hidden rewards are kept for evaluation only).
#[derive(Clone, Debug, PartialEq)]
pub struct OfflineDataset<S> {
    pub episodes: Vec<Episode<S>>,
    pub r_avg: S,
}

impl<S: Scalar> OfflineDataset<S> {
    pub fn new(episodes: Vec<Episode<S>>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::InvalidArgument(
                "offline dataset needs at least one episode".into(),
            ));
        }
        let r_avg = Self::mean_reward(&episodes);
        Ok(Self { episodes, r_avg })
    }

    fn mean_reward(episodes: &[Episode<S>]) -> S {
        let n: usize = episodes.iter().map(Episode::len).sum();
        if n == 0 {
            return S::zero();
        }
        let total: S = episodes
            .iter()
            .flat_map(|e| e.rewards_hidden.iter().copied())
            .sum();
        total / S::from_count(n)
    }

    /// Mean hidden reward recomputed from the stored transitions.
    pub fn recompute_r_avg(&self) -> S {
        Self::mean_reward(&self.episodes)
    }

    pub fn transition_count(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }

    pub fn segment(&self, id: SegmentId, h: usize) -> Result<Segment<S>> {
        self.episodes
            .get(id.episode)
            .ok_or(Error::UnknownSegment(id))?
            .window(id.episode, id.start, h)
    }
}

/// Draws `count` windows of length `h`, uniform over `(episode, start)`.
pub fn sample_segments<S: Scalar>(
    dataset: &OfflineDataset<S>,
    h: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Segment<S>>> {
    sample_segments_with(dataset, h, count, &mut seed::rng(seed))
}

pub fn sample_segments_with<S: Scalar>(
    dataset: &OfflineDataset<S>,
    h: usize,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<Segment<S>>> {
    sample_segment_ids(dataset, h, count, rng)?
        .into_iter()
        .map(|id| dataset.segment(id, h))
        .collect()
}

/// Same draw as [`sample_segments_with`] without materializing the windows.
pub fn sample_segment_ids<S: Scalar>(
    dataset: &OfflineDataset<S>,
    h: usize,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<SegmentId>> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    if h == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    // cumulative window counts over eligible episodes
    let mut eligible = Vec::new();
    let mut total = 0usize;
    for (i, ep) in dataset.episodes.iter().enumerate() {
        if ep.len() >= h {
            total += ep.len() - h + 1;
            eligible.push((i, total));
        }
    }
    if eligible.is_empty() {
        return Err(Error::NoEligibleEpisodes);
    }
    let ids = (0..count)
        .map(|_| {
            let k = rng.random_range(0..total);
            let pos = eligible.partition_point(|&(_, cum)| cum <= k);
            let (episode, cum) = eligible[pos];
            let windows = dataset.episodes[episode].len() - h + 1;
            SegmentId::new(episode, k - (cum - windows))
        })
        .collect();
    Ok(ids)
}

/// Teacher answer for a query `(σ₀, σ₁)`.
///
/// Numeric convention: `PreferFirst ↔ p = 0`, `PreferSecond ↔ p = 1`, so that the
/// cross-entropy target for `P[σ₁ ≻ σ₀]` is `p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PreferenceLabel {
    #[serde(rename = "first")]
    PreferFirst,
    #[serde(rename = "second")]
    PreferSecond,
    #[serde(rename = "skip")]
    NoComparison,
}

impl PreferenceLabel {
    /// Target probability that the second segment is preferred; `None` for skips.
    pub fn target(self) -> Option<u8> {
        match self {
            PreferenceLabel::PreferFirst => Some(0),
            PreferenceLabel::PreferSecond => Some(1),
            PreferenceLabel::NoComparison => None,
        }
    }

    pub fn is_clear(self) -> bool {
        self != PreferenceLabel::NoComparison
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PreferenceLabel::PreferFirst => "first",
            PreferenceLabel::PreferSecond => "second",
            PreferenceLabel::NoComparison => "skip",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "first" => Some(PreferenceLabel::PreferFirst),
            "second" => Some(PreferenceLabel::PreferSecond),
            "skip" => Some(PreferenceLabel::NoComparison),
            _ => None,
        }
    }

    /// Label of the same query asked in the opposite order.
    pub fn swapped(self) -> Self {
        match self {
            PreferenceLabel::PreferFirst => PreferenceLabel::PreferSecond,
            PreferenceLabel::PreferSecond => PreferenceLabel::PreferFirst,
            PreferenceLabel::NoComparison => PreferenceLabel::NoComparison,
        }
    }
}

/// Unordered key of a query, used for duplicate detection.
pub fn pair_key(a: SegmentId, b: SegmentId) -> (SegmentId, SegmentId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceTriple<S> {
    pub seg0: Arc<Segment<S>>,
    pub seg1: Arc<Segment<S>>,
    pub label: PreferenceLabel,
    pub round: usize,
}

impl<S: Scalar> PreferenceTriple<S> {
    pub fn new(
        seg0: Arc<Segment<S>>,
        seg1: Arc<Segment<S>>,
        label: PreferenceLabel,
        round: usize,
    ) -> Result<Self> {
        if seg0.id == seg1.id {
            return Err(Error::InvalidArgument(format!(
                "a query compares two distinct segments, got {} twice",
                seg0.id
            )));
        }
        Ok(Self {
            seg0,
            seg1,
            label,
            round,
        })
    }

    pub fn key(&self) -> (SegmentId, SegmentId) {
        pair_key(self.seg0.id, self.seg1.id)
    }

    /// `(preferred, other)` for clear triples.
    #[allow(clippy::type_complexity)]
    pub fn ranked(&self) -> Option<(&Arc<Segment<S>>, &Arc<Segment<S>>)> {
        match self.label {
            PreferenceLabel::PreferFirst => Some((&self.seg0, &self.seg1)),
            PreferenceLabel::PreferSecond => Some((&self.seg1, &self.seg0)),
            PreferenceLabel::NoComparison => None,
        }
    }
}

/// Labeled queries `D_p`.
#[derive(Clone, Debug, Default)]
pub struct PreferenceDataset<S> {
    triples: Vec<PreferenceTriple<S>>,
    keys: HashSet<(SegmentId, SegmentId)>,
}

impl<S: Scalar> PreferenceDataset<S> {
    pub fn new() -> Self {
        Self {
            triples: Vec::new(),
            keys: HashSet::new(),
        }
    }

    pub fn from_triples(triples: Vec<PreferenceTriple<S>>) -> Self {
        let mut ds = Self::new();
        for t in triples {
            ds.push(t);
        }
        ds
    }

    pub fn push(&mut self, triple: PreferenceTriple<S>) {
        self.keys.insert(triple.key());
        self.triples.push(triple);
    }

    pub fn triples(&self) -> &[PreferenceTriple<S>] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains_pair(&self, a: SegmentId, b: SegmentId) -> bool {
        self.keys.contains(&pair_key(a, b))
    }

    pub fn clear(&self) -> impl Iterator<Item = &PreferenceTriple<S>> {
        self.triples.iter().filter(|t| t.label.is_clear())
    }

    pub fn ambiguous(&self) -> impl Iterator<Item = &PreferenceTriple<S>> {
        self.triples.iter().filter(|t| !t.label.is_clear())
    }

    pub fn clear_count(&self) -> usize {
        self.clear().count()
    }

    pub fn ambiguous_count(&self) -> usize {
        self.ambiguous().count()
    }

    /// Distinct segments referenced by any triple, in first-appearance order.
    pub fn segments(&self) -> Vec<Arc<Segment<S>>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for t in &self.triples {
            for s in [&t.seg0, &t.seg1] {
                if seen.insert(s.id) {
                    out.push(Arc::clone(s));
                }
            }
        }
        out
    }

    /// Keeps only triples from rounds `< round`.
    pub fn truncate_to_round(&mut self, round: usize) {
        self.triples.retain(|t| t.round < round);
        self.keys = self.triples.iter().map(PreferenceTriple::key).collect();
    }
}
