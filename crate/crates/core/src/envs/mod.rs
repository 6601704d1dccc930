//! Synthetic environments with known rewards and offline-dataset generation.

mod gridnav;
mod pointmass;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Episode, OfflineDataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::{self, Rng};

pub use crate::reward::value_iteration as optimal_tabular_policy;
pub use gridnav::{GridAction, GridNavEnv};
pub use pointmass::PointMassEnv;

/// A transition function with a hidden reward and a noisy near-optimal behavior policy.
pub trait Environment {
    type State: Clone;
    type Action: Clone;

    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn max_episode_len(&self) -> usize;
    fn reset(&self, rng: &mut Rng) -> Self::State;
    fn step(&self, state: &Self::State, action: &Self::Action) -> (Self::State, f64);
    /// Optimal action with probability `1 - noise`, otherwise a uniformly random one.
    fn behavior_action(&self, state: &Self::State, noise: f64, rng: &mut Rng) -> Self::Action;
    fn encode_state(&self, state: &Self::State) -> Vec<f64>;
    fn encode_action(&self, action: &Self::Action) -> Vec<f64>;
}

/// Mixture of behavior-noise levels; each entry is `(noise, fraction)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityMix(pub Vec<(f64, f64)>);

impl QualityMix {
    pub fn new(parts: Vec<(f64, f64)>) -> Result<Self> {
        let mix = Self(parts);
        mix.validate()?;
        Ok(mix)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::InvalidArgument("quality mix is empty".into()));
        }
        for &(noise, frac) in &self.0 {
            if !(0.0..=1.0).contains(&noise) {
                return Err(Error::InvalidArgument(format!(
                    "behavior noise {noise} outside [0, 1]"
                )));
            }
            if frac < 0.0 || !frac.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "negative mix fraction {frac}"
                )));
            }
        }
        let total: f64 = self.0.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "mix fractions sum to {total}, not 1"
            )));
        }
        Ok(())
    }

    /// Noise level of every episode, allocating counts by largest remainder.
    pub fn allocate(&self, n_episodes: usize) -> Vec<f64> {
        let raw: Vec<f64> = self.0.iter().map(|p| p.1 * n_episodes as f64).collect();
        let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
        let mut left = n_episodes - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| {
            (raw[b] - raw[b].floor())
                .total_cmp(&(raw[a] - raw[a].floor()))
                .then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        self.0
            .iter()
            .zip(counts)
            .flat_map(|(&(noise, _), c)| std::iter::repeat_n(noise, c))
            .collect()
    }
}

/// Rolls out `n_episodes` episodes of fixed length with the mix's behavior policies.
pub fn generate_offline_dataset<S: Scalar, E: Environment>(
    env: &E,
    mix: &QualityMix,
    n_episodes: usize,
    seed: u64,
) -> Result<OfflineDataset<S>> {
    mix.validate()?;
    if n_episodes == 0 {
        return Err(Error::InvalidArgument(
            "n_episodes must be at least 1".into(),
        ));
    }
    let mut rng = seed::rng(seed);
    let episodes = mix
        .allocate(n_episodes)
        .into_iter()
        .map(|noise| rollout(env, noise, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    OfflineDataset::new(episodes)
}

fn rollout<S: Scalar, E: Environment>(env: &E, noise: f64, rng: &mut Rng) -> Result<Episode<S>> {
    let lit = |v: Vec<f64>| v.into_iter().map(S::lit).collect::<Vec<S>>();
    let n = env.max_episode_len();
    let (mut states, mut actions, mut rewards) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    let mut state = env.reset(rng);
    for _ in 0..n {
        let action = env.behavior_action(&state, noise, rng);
        let (next, r) = env.step(&state, &action);
        states.push(lit(env.encode_state(&state)));
        actions.push(lit(env.encode_action(&action)));
        rewards.push(S::lit(r));
        state = next;
    }
    Episode::new(states, actions, rewards)
}

/// Either environment, chosen at run time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Gridnav(GridNavEnv),
    Pointmass(PointMassEnv),
}

impl EnvSpec {
    pub fn generate<S: Scalar>(
        &self,
        mix: &QualityMix,
        n_episodes: usize,
        seed: u64,
    ) -> Result<OfflineDataset<S>> {
        match self {
            EnvSpec::Gridnav(e) => generate_offline_dataset(e, mix, n_episodes, seed),
            EnvSpec::Pointmass(e) => generate_offline_dataset(e, mix, n_episodes, seed),
        }
    }

    pub fn max_episode_len(&self) -> usize {
        match self {
            EnvSpec::Gridnav(e) => e.max_episode_len,
            EnvSpec::Pointmass(e) => e.max_episode_len,
        }
    }

    pub fn as_tabular(&self) -> Option<&GridNavEnv> {
        match self {
            EnvSpec::Gridnav(e) => Some(e),
            EnvSpec::Pointmass(_) => None,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            EnvSpec::Gridnav(e) => e.state_dim(),
            EnvSpec::Pointmass(e) => e.state_dim(),
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            EnvSpec::Gridnav(e) => e.action_dim(),
            EnvSpec::Pointmass(e) => e.action_dim(),
        }
    }

    /// 2-D positions visited by an encoded state sequence.
    pub fn path_points<S: Scalar>(&self, states: &[Vec<S>]) -> Vec<[f64; 2]> {
        states
            .iter()
            .map(|s| match self {
                EnvSpec::Gridnav(e) => e.position_of_encoded(s),
                EnvSpec::Pointmass(_) => [s[0].as_f64(), s[1].as_f64()],
            })
            .collect()
    }

    pub fn goal_point(&self) -> [f64; 2] {
        match self {
            EnvSpec::Gridnav(e) => [e.goal.0 as f64, e.goal.1 as f64],
            EnvSpec::Pointmass(e) => e.goal,
        }
    }

    pub fn goal_radius(&self) -> f64 {
        match self {
            EnvSpec::Gridnav(_) => 0.5,
            EnvSpec::Pointmass(e) => e.goal_radius,
        }
    }
}

pub(crate) fn coin(rng: &mut Rng, p: f64) -> bool {
    p > 0.0 && rng.random::<f64>() < p
}
