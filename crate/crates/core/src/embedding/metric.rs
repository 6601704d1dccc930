use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Distance `ℓ` between embeddings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    L2,
    SquaredL2,
}

impl DistanceMetric {
    pub fn distance<S: Scalar>(self, a: &[S], b: &[S]) -> S {
        let sq: S = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
        match self {
            DistanceMetric::L2 => sq.sqrt(),
            DistanceMetric::SquaredL2 => sq,
        }
    }

    /// `∂ℓ(a, b)/∂a`; the gradient with respect to `b` is its negation.
    /// Under L2 the subgradient at `a = b` is zero.
    pub fn grad_a<S: Scalar>(self, a: &[S], b: &[S]) -> Vec<S> {
        let diff: Vec<S> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
        match self {
            DistanceMetric::L2 => {
                let n = diff.iter().map(|&d| d * d).sum::<S>().sqrt();
                if n == S::zero() {
                    vec![S::zero(); diff.len()]
                } else {
                    diff.into_iter().map(|d| d / n).collect()
                }
            }
            DistanceMetric::SquaredL2 => diff.into_iter().map(|d| d + d).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn metric_axioms() {
        let mut rng = seed::rng(0);
        for metric in [DistanceMetric::L2, DistanceMetric::SquaredL2] {
            for _ in 0..100 {
                let a: Vec<f64> = (0..5).map(|_| StandardNormal.sample(&mut rng)).collect();
                let b: Vec<f64> = (0..5).map(|_| StandardNormal.sample(&mut rng)).collect();
                assert!(metric.distance(&a, &b) >= 0.0);
                assert!((metric.distance(&a, &b) - metric.distance(&b, &a)).abs() <= 1e-12);
                assert_eq!(metric.distance(&a, &a), 0.0);
                assert!(metric.distance(&a, &b) > 0.0);
            }
        }
        assert_eq!(DistanceMetric::L2.distance(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
        assert_eq!(
            DistanceMetric::SquaredL2.distance(&[0.0, 0.0], &[3.0, 4.0]),
            25.0
        );
    }
}
