use crate::envs::{EnvSpec, GridAction, GridNavEnv};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ValueIteration {
    /// Greedy action index per cell.
    pub policy: Vec<usize>,
    pub values: Vec<f64>,
    /// Sup-norm Bellman residual after each sweep.
    pub residuals: Vec<f64>,
}

/// Bellman backup `Q(s, a) = r(s, a) + γ V(next(s, a))`.
fn q_value(
    env: &GridNavEnv,
    reward: &[[f64; 4]],
    values: &[f64],
    gamma: f64,
    cell: usize,
    a: GridAction,
) -> f64 {
    reward[cell][a.index()] + gamma * values[env.next_cell(cell, a)]
}

/// Argmax in the fixed action order; the first maximal action wins.
fn greedy(
    env: &GridNavEnv,
    reward: &[[f64; 4]],
    values: &[f64],
    gamma: f64,
    cell: usize,
) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for a in GridAction::ALL {
        let q = q_value(env, reward, values, gamma, cell, a);
        if q > best.1 {
            best = (a.index(), q);
        }
    }
    best
}

/// Synchronous value iteration on the grid for an arbitrary `r(s, a)` table.
pub fn value_iteration_table(
    env: &GridNavEnv,
    reward: &[[f64; 4]],
    gamma: f64,
    tol: f64,
) -> Result<ValueIteration> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "discount {gamma} outside [0, 1)"
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tolerance {tol} must be positive"
        )));
    }
    if reward.len() != env.n_cells() {
        return Err(Error::Dimension {
            expected: env.n_cells(),
            found: reward.len(),
        });
    }
    let n = env.n_cells();
    let mut values = vec![0.0; n];
    let mut residuals = Vec::new();
    loop {
        let next: Vec<f64> = (0..n)
            .map(|c| greedy(env, reward, &values, gamma, c).1)
            .collect();
        let residual = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        values = next;
        residuals.push(residual);
        if residual <= tol {
            break;
        }
    }
    let policy = (0..n)
        .map(|c| greedy(env, reward, &values, gamma, c).0)
        .collect();
    Ok(ValueIteration {
        policy,
        values,
        residuals,
    })
}

/// Value iteration for environments with a finite state space.
pub fn value_iteration(
    env: &EnvSpec,
    reward: &[[f64; 4]],
    gamma: f64,
    tol: f64,
) -> Result<ValueIteration> {
    value_iteration_table(
        env.as_tabular().ok_or(Error::NotTabular)?,
        reward,
        gamma,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::PointMassEnv;

    #[test]
    fn optimal_policy_follows_shortest_paths() {
        let env = GridNavEnv::new(3, (2, 2), 20).unwrap();
        let vi = value_iteration_table(&env, &env.true_reward_table(), 0.99, 1e-10).unwrap();
        for start in 0..env.n_cells() {
            let (x, y) = env.coords(start);
            let manhattan = (2 - x) + (2 - y);
            let mut cell = start;
            let mut steps = 0;
            while cell != env.goal_cell() {
                cell = env.next_cell(cell, GridAction::from_index(vi.policy[cell]));
                steps += 1;
                assert!(steps <= manhattan);
            }
            assert_eq!(steps, manhattan);
        }
    }

    #[test]
    fn residuals_contract_to_tolerance() {
        let env = GridNavEnv::default();
        let vi = value_iteration_table(&env, &env.true_reward_table(), 0.9, 1e-8).unwrap();
        assert!(*vi.residuals.last().unwrap() <= 1e-8);
        assert!(vi.residuals.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn myopic_and_zero_reward_limits() {
        let env = GridNavEnv::new(3, (2, 2), 20).unwrap();
        let mut table = vec![[0.0; 4]; env.n_cells()];
        table[0] = [0.0, 0.0, 0.0, 5.0];
        table[1] = [0.0, 2.0, 0.0, 1.0];
        let vi = value_iteration_table(&env, &table, 0.0, 1e-12).unwrap();
        assert_eq!(vi.policy[0], 3);
        assert_eq!(vi.policy[1], 1);
        let zero = value_iteration_table(&env, &vec![[0.0; 4]; 9], 0.95, 1e-12).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        assert!(zero.policy.iter().all(|&a| a == 0));
    }

    #[test]
    fn rejects_non_tabular_and_bad_discount() {
        let spec = EnvSpec::Pointmass(PointMassEnv::default());
        assert!(matches!(
            value_iteration(&spec, &[], 0.9, 1e-6),
            Err(Error::NotTabular)
        ));
        let env = GridNavEnv::default();
        assert!(value_iteration_table(&env, &env.true_reward_table(), 1.0, 1e-6).is_err());
    }
}
