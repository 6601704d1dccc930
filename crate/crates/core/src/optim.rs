//! First-order update rules over flat parameter slices.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Fixed-step gradient descent.
    Sgd,
    #[default]
    /// Adaptive moment estimation (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Optimizer<S> {
    pub kind: OptimizerKind,
    pub lr: S,
    step: u64,
    m: Vec<S>,
    v: Vec<S>,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(kind: OptimizerKind, lr: S, num_params: usize) -> Self {
        let (m, v) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam => (vec![S::zero(); num_params], vec![S::zero(); num_params]),
        };
        Self {
            kind,
            lr,
            step: 0,
            m,
            v,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [S], grads: &[S]) {
        self.step_blocks(&mut [params], grads);
    }

    /// One update over parameter blocks laid out back to back in `grads`.
    pub fn step_blocks(&mut self, blocks: &mut [&mut [S]], grads: &[S]) {
        self.step += 1;
        let mut flat = blocks.iter_mut().flat_map(|b| b.iter_mut());
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, &g) in flat.by_ref().zip(grads) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (S::lit(0.9), S::lit(0.999), S::lit(1e-8));
                let t = self.step as i32;
                let c1 = S::one() - b1.powi(t);
                let c2 = S::one() - b2.powi(t);
                for (((p, &g), m), v) in flat.by_ref().zip(grads).zip(&mut self.m).zip(&mut self.v)
                {
                    *m = b1 * *m + (S::one() - b1) * g;
                    *v = b2 * *v + (S::one() - b2) * g * g;
                    let mh = *m / c1;
                    let vh = *v / c2;
                    *p -= self.lr * mh / (vh.sqrt() + eps);
                }
            }
        }
        debug_assert!(flat.next().is_none(), "gradient shorter than parameters");
    }
}
