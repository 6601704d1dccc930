//! Dense feed-forward networks with hand-written backpropagation.
//!
//! Parameters live in one flat vector (per layer: row-major weights, then
//! bias) so optimizers and finite-difference checks can treat every network
//! as a plain slice.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::seed::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(S::zero()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output<S: Scalar>(self, y: S) -> S {
        match self {
            Activation::Identity => S::one(),
            Activation::Relu => {
                if y > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Tanh => S::one() - y * y,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Mlp<S> {
    sizes: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: Vec<S>,
}

/// Layer outputs recorded by [`Mlp::forward_trace`]; `acts[0]` is the input.
#[derive(Clone, Debug)]
pub struct Trace<S> {
    acts: Vec<Vec<S>>,
}

impl<S: Scalar> Trace<S> {
    pub fn output(&self) -> &[S] {
        self.acts.last().expect("trace has an output")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<S: Scalar> Mlp<S> {
    /// Gaussian weights scaled by `1/√fan_in`, zero biases.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let scale = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                let z: f64 = StandardNormal.sample(rng);
                params.push(S::lit(z * scale));
            }
            params.extend(std::iter::repeat_n(S::zero(), w[1]));
        }
        Self {
            sizes: sizes.to_vec(),
            hidden,
            output,
            params,
        }
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        Self {
            sizes: sizes.to_vec(),
            hidden,
            output,
            params: vec![S::zero(); param_count(sizes)],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 2 == self.sizes.len() {
            self.output
        } else {
            self.hidden
        }
    }

    fn layer_forward(&self, layer: usize, offset: usize, x: &[S]) -> Vec<S> {
        let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        let act = self.activation(layer);
        w.chunks_exact(n_in)
            .zip(b)
            .map(|(row, &bias)| {
                let z = row
                    .iter()
                    .zip(x)
                    .fold(bias, |acc, (&wi, &xi)| acc + wi * xi);
                act.apply(z)
            })
            .collect()
    }

    pub fn forward(&self, x: &[S]) -> Vec<S> {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut offset = 0;
        let mut h = x.to_vec();
        for layer in 0..self.sizes.len() - 1 {
            h = self.layer_forward(layer, offset, &h);
            offset += self.sizes[layer] * self.sizes[layer + 1] + self.sizes[layer + 1];
        }
        h
    }

    pub fn forward_trace(&self, x: &[S]) -> Trace<S> {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        let mut offset = 0;
        for layer in 0..self.sizes.len() - 1 {
            let next = self.layer_forward(layer, offset, acts.last().unwrap());
            acts.push(next);
            offset += self.sizes[layer] * self.sizes[layer + 1] + self.sizes[layer + 1];
        }
        Trace { acts }
    }

    /// Accumulates `∂L/∂θ` into `grads` and returns `∂L/∂x`, given `∂L/∂output`.
    pub fn backward(&self, trace: &Trace<S>, grad_out: &[S], grads: &mut [S]) -> Vec<S> {
        debug_assert_eq!(grads.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut upstream = grad_out.to_vec();
        for layer in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
            let act = self.activation(layer);
            let input = &trace.acts[layer];
            let output = &trace.acts[layer + 1];
            let delta: Vec<S> = upstream
                .iter()
                .zip(output)
                .map(|(&g, &y)| g * act.derivative_from_output(y))
                .collect();
            let o = offsets[layer];
            let w = &self.params[o..o + n_in * n_out];
            let (gw, gb) = grads[o..o + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let mut grad_in = vec![S::zero(); n_in];
            for (r, &d) in delta.iter().enumerate() {
                if d == S::zero() {
                    continue;
                }
                gb[r] += d;
                let grow = &mut gw[r * n_in..(r + 1) * n_in];
                for (g, &xi) in grow.iter_mut().zip(input) {
                    *g += d * xi;
                }
                for (gi, &wi) in grad_in.iter_mut().zip(&w[r * n_in..(r + 1) * n_in]) {
                    *gi += d * wi;
                }
            }
            upstream = grad_in;
        }
        upstream
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn numeric_grad(net: &Mlp<f64>, x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let h = 1e-6;
        (0..net.num_params())
            .map(|i| {
                let mut p = net.clone();
                p.params_mut()[i] += h;
                let up = f(&p.forward(x));
                p.params_mut()[i] -= 2.0 * h;
                let down = f(&p.forward(x));
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = seed::rng(11);
        for (hidden, out) in [
            (Activation::Tanh, Activation::Identity),
            (Activation::Relu, Activation::Tanh),
        ] {
            let net = Mlp::<f64>::new(&[3, 5, 4, 2], hidden, out, &mut rng);
            let x = [0.3, -0.7, 1.1];
            let loss = |y: &[f64]| 0.5 * y[0] * y[0] - 2.0 * y[1];
            let trace = net.forward_trace(&x);
            let y = trace.output();
            let mut grads = vec![0.0; net.num_params()];
            net.backward(&trace, &[y[0], -2.0], &mut grads);
            let num = numeric_grad(&net, &x, loss);
            for (a, n) in grads.iter().zip(&num) {
                assert!((a - n).abs() <= 1e-6 * (1.0 + n.abs()), "{a} vs {n}");
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let net = Mlp::<f64>::new(
            &[4, 6, 3],
            Activation::Tanh,
            Activation::Identity,
            &mut seed::rng(2),
        );
        let x = vec![0.1, 0.2, -0.4, 0.9];
        let trace = net.forward_trace(&x);
        let mut grads = vec![0.0; net.num_params()];
        let gx = net.backward(&trace, &[1.0, 1.0, 1.0], &mut grads);
        for i in 0..4 {
            let mut xp = x.clone();
            xp[i] += 1e-6;
            let mut xm = x.clone();
            xm[i] -= 1e-6;
            let n = (net.forward(&xp).iter().sum::<f64>() - net.forward(&xm).iter().sum::<f64>())
                / 2e-6;
            assert!((gx[i] - n).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::<f32>::zeros(&[5, 8, 3], Activation::Tanh, Activation::Identity);
        assert_eq!(net.forward(&[1.0, 2.0, 3.0, 4.0, 5.0]), vec![0.0; 3]);
    }
}
