use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{coin, Environment};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Point in a bounded square arena; the action is a velocity command clamped to `v_max` per axis.
///
/// State is `(x, y, vx, vy)` where the velocity is the last applied command.
/// The reward is the negative distance from the next position to the goal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PointMassEnv {
    pub bound: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub v_max: f64,
    pub max_episode_len: usize,
}

impl Default for PointMassEnv {
    fn default() -> Self {
        Self {
            bound: 1.0,
            goal: [0.7, 0.7],
            goal_radius: 0.1,
            v_max: 0.1,
            max_episode_len: 100,
        }
    }
}

impl PointMassEnv {
    pub fn validate(&self) -> Result<()> {
        if self.bound.is_nan()
            || self.bound <= 0.0
            || self.v_max.is_nan()
            || self.v_max <= 0.0
            || self.goal_radius.is_nan()
            || self.goal_radius < 0.0
        {
            return Err(Error::InvalidArgument(
                "point-mass bound, v_max and goal radius must be positive".into(),
            ));
        }
        if self.goal.iter().any(|g| g.abs() > self.bound) {
            return Err(Error::InvalidArgument(format!(
                "goal {:?} outside the arena",
                self.goal
            )));
        }
        if self.max_episode_len == 0 {
            return Err(Error::InvalidArgument(
                "max_episode_len must be positive".into(),
            ));
        }
        Ok(())
    }

    fn clamp_action(&self, a: [f64; 2]) -> [f64; 2] {
        a.map(|v| v.clamp(-self.v_max, self.v_max))
    }

    pub fn distance_to_goal(&self, p: [f64; 2]) -> f64 {
        ((p[0] - self.goal[0]).powi(2) + (p[1] - self.goal[1]).powi(2)).sqrt()
    }
}

impl Environment for PointMassEnv {
    type State = [f64; 4];
    type Action = [f64; 2];

    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn max_episode_len(&self) -> usize {
        self.max_episode_len
    }

    fn reset(&self, rng: &mut Rng) -> [f64; 4] {
        let b = self.bound;
        [rng.random_range(-b..=b), rng.random_range(-b..=b), 0.0, 0.0]
    }

    fn step(&self, state: &[f64; 4], action: &[f64; 2]) -> ([f64; 4], f64) {
        let a = self.clamp_action(*action);
        let x = (state[0] + a[0]).clamp(-self.bound, self.bound);
        let y = (state[1] + a[1]).clamp(-self.bound, self.bound);
        ([x, y, a[0], a[1]], -self.distance_to_goal([x, y]))
    }

    fn behavior_action(&self, state: &[f64; 4], noise: f64, rng: &mut Rng) -> [f64; 2] {
        if coin(rng, noise) {
            return [
                rng.random_range(-self.v_max..=self.v_max),
                rng.random_range(-self.v_max..=self.v_max),
            ];
        }
        // largest step along the goal direction that stays within the per-axis bound
        let d = [self.goal[0] - state[0], self.goal[1] - state[1]];
        let scale = d[0].abs().max(d[1].abs());
        if scale <= self.v_max {
            d
        } else {
            [d[0] * self.v_max / scale, d[1] * self.v_max / scale]
        }
    }

    fn encode_state(&self, state: &[f64; 4]) -> Vec<f64> {
        state.to_vec()
    }

    fn encode_action(&self, action: &[f64; 2]) -> Vec<f64> {
        self.clamp_action(*action).to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{generate_offline_dataset, QualityMix};

    #[test]
    fn states_stay_in_bounds() {
        let env = PointMassEnv::default();
        let mix = QualityMix::new(vec![(1.0, 1.0)]).unwrap();
        let ds = generate_offline_dataset::<f64, _>(&env, &mix, 30, 3).unwrap();
        for ep in &ds.episodes {
            for s in &ep.states {
                assert!(s[0].abs() <= 1.0 && s[1].abs() <= 1.0);
                assert!(s[2].abs() <= env.v_max && s[3].abs() <= env.v_max);
            }
        }
    }

    #[test]
    fn reward_increases_toward_goal() {
        let env = PointMassEnv::default();
        let (_, far) = env.step(&[0.0, 0.0, 0.0, 0.0], &[0.0, 0.0]);
        let (_, near) = env.step(&[0.0, 0.0, 0.0, 0.0], &[0.1, 0.1]);
        assert!(near > far);
        let (_, at) = env.step(&[0.7, 0.7, 0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(at, 0.0);
    }

    #[test]
    fn greedy_behavior_beats_random() {
        let env = PointMassEnv::default();
        let mean = |noise: f64| {
            let mix = QualityMix::new(vec![(noise, 1.0)]).unwrap();
            let ds = generate_offline_dataset::<f64, _>(&env, &mix, 100, 0).unwrap();
            ds.episodes.iter().map(|e| e.episode_return()).sum::<f64>() / 100.0
        };
        assert!(mean(0.0) > mean(1.0));
    }
}
