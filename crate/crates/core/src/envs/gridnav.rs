use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{coin, Environment};
use crate::error::{Error, Result};
use crate::reward::value_iteration_table;
use crate::scalar::Scalar;
use crate::seed::Rng;

/// Moves in the fixed tie-break order used by greedy policies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GridAction {
    Up,
    Down,
    Left,
    Right,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [
        GridAction::Up,
        GridAction::Down,
        GridAction::Left,
        GridAction::Right,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }
}

/// `N × N` grid with a 4-neighborhood, clamping walls and an absorbing goal.
///
/// The reward of `(s, a)` is `goal_reward` when the move lands on (or stays
/// on) the goal cell and `step_reward` otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridNavEnv {
    pub size: usize,
    pub goal: (usize, usize),
    pub step_reward: f64,
    pub goal_reward: f64,
    pub gamma: f64,
    pub max_episode_len: usize,
}

impl Default for GridNavEnv {
    fn default() -> Self {
        Self {
            size: 8,
            goal: (7, 7),
            step_reward: 0.0,
            goal_reward: 1.0,
            gamma: 0.99,
            max_episode_len: 100,
        }
    }
}

impl GridNavEnv {
    pub fn new(size: usize, goal: (usize, usize), max_episode_len: usize) -> Result<Self> {
        let env = Self {
            size,
            goal,
            max_episode_len,
            ..Self::default()
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.goal.0 >= self.size || self.goal.1 >= self.size {
            return Err(Error::InvalidArgument(format!(
                "goal {:?} outside a {}x{} grid",
                self.goal, self.size, self.size
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma {} outside (0, 1)",
                self.gamma
            )));
        }
        if self.max_episode_len == 0 {
            return Err(Error::InvalidArgument(
                "max_episode_len must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.size * self.size
    }

    pub fn cell(&self, x: usize, y: usize) -> usize {
        y * self.size + x
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.size, cell / self.size)
    }

    pub fn goal_cell(&self) -> usize {
        self.cell(self.goal.0, self.goal.1)
    }

    pub fn next_cell(&self, cell: usize, action: GridAction) -> usize {
        if cell == self.goal_cell() {
            return cell;
        }
        let (x, y) = self.coords(cell);
        let (x, y) = match action {
            GridAction::Up => (x, (y + 1).min(self.size - 1)),
            GridAction::Down => (x, y.saturating_sub(1)),
            GridAction::Left => (x.saturating_sub(1), y),
            GridAction::Right => ((x + 1).min(self.size - 1), y),
        };
        self.cell(x, y)
    }

    pub fn reward(&self, cell: usize, action: GridAction) -> f64 {
        if self.next_cell(cell, action) == self.goal_cell() {
            self.goal_reward
        } else {
            self.step_reward
        }
    }

    /// Ground-truth `r(s, a)` for every cell and action.
    pub fn true_reward_table(&self) -> Vec<[f64; 4]> {
        (0..self.n_cells())
            .map(|c| GridAction::ALL.map(|a| self.reward(c, a)))
            .collect()
    }

    /// Greedy policy of the true reward.
    pub fn optimal_policy(&self) -> Vec<usize> {
        value_iteration_table(self, &self.true_reward_table(), self.gamma, 1e-10)
            .expect("valid discount")
            .policy
    }

    /// Undiscounted true return of a deterministic policy from `start` over one episode.
    pub fn policy_return(&self, policy: &[usize], start: usize) -> f64 {
        let mut cell = start;
        let mut total = 0.0;
        for _ in 0..self.max_episode_len {
            let a = GridAction::from_index(policy[cell]);
            total += self.reward(cell, a);
            cell = self.next_cell(cell, a);
        }
        total
    }

    /// Mean [`policy_return`](Self::policy_return) over all non-goal start cells.
    pub fn mean_policy_return(&self, policy: &[usize]) -> f64 {
        let starts: Vec<usize> = (0..self.n_cells())
            .filter(|&c| c != self.goal_cell())
            .collect();
        starts
            .iter()
            .map(|&c| self.policy_return(policy, c))
            .sum::<f64>()
            / starts.len() as f64
    }

    pub fn encode_cell(&self, cell: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_cells() + 2];
        v[cell] = 1.0;
        let (x, y) = self.coords(cell);
        let denom = (self.size.max(2) - 1) as f64;
        v[self.n_cells()] = x as f64 / denom;
        v[self.n_cells() + 1] = y as f64 / denom;
        v
    }

    /// Cell index of an encoded state (argmax of the one-hot block).
    pub fn decode_cell<S: Scalar>(&self, encoded: &[S]) -> usize {
        encoded[..self.n_cells()]
            .iter()
            .enumerate()
            .fold((0, S::neg_infinity()), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0
    }

    pub fn decode_action<S: Scalar>(&self, encoded: &[S]) -> GridAction {
        let i = encoded
            .iter()
            .enumerate()
            .fold((0, S::neg_infinity()), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0;
        GridAction::from_index(i)
    }

    pub fn position_of_encoded<S: Scalar>(&self, encoded: &[S]) -> [f64; 2] {
        let (x, y) = self.coords(self.decode_cell(encoded));
        [x as f64, y as f64]
    }
}

impl Environment for GridNavEnv {
    type State = usize;
    type Action = GridAction;

    fn state_dim(&self) -> usize {
        self.n_cells() + 2
    }

    fn action_dim(&self) -> usize {
        4
    }

    fn max_episode_len(&self) -> usize {
        self.max_episode_len
    }

    fn reset(&self, rng: &mut Rng) -> usize {
        // uniform over non-goal cells
        let c = rng.random_range(0..self.n_cells() - 1);
        if c >= self.goal_cell() {
            c + 1
        } else {
            c
        }
    }

    fn step(&self, state: &usize, action: &GridAction) -> (usize, f64) {
        (
            self.next_cell(*state, *action),
            self.reward(*state, *action),
        )
    }

    fn behavior_action(&self, state: &usize, noise: f64, rng: &mut Rng) -> GridAction {
        thread_local! {
            static CACHE: std::cell::RefCell<Option<(GridNavEnv, Vec<usize>)>> = const { std::cell::RefCell::new(None) };
        }
        if coin(rng, noise) {
            return GridAction::from_index(rng.random_range(0..4));
        }
        CACHE.with(|c| {
            let mut c = c.borrow_mut();
            if c.as_ref().is_none_or(|(env, _)| env != self) {
                *c = Some((self.clone(), self.optimal_policy()));
            }
            GridAction::from_index(c.as_ref().unwrap().1[*state])
        })
    }

    fn encode_state(&self, state: &usize) -> Vec<f64> {
        self.encode_cell(*state)
    }

    fn encode_action(&self, action: &GridAction) -> Vec<f64> {
        let mut v = vec![0.0; 4];
        v[action.index()] = 1.0;
        v
    }
}
