use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metric::DistanceMetric;
use super::model::EmbeddingModel;
use crate::data::{PreferenceDataset, SegmentId};
use crate::error::Result;
use crate::scalar::Scalar;

/// Centroid hyperplane `w·z + b = 0` with `w = μ⁺ − μ⁻`, `b = −½(‖μ⁺‖² − ‖μ⁻‖²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub mu_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
    pub w: Vec<f64>,
    pub b: f64,
    /// Half the centroid distance.
    pub eta: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Hyperplane {
    pub fn from_centroids(mu_plus: Vec<f64>, mu_minus: Vec<f64>) -> Self {
        let w: Vec<f64> = mu_plus.iter().zip(&mu_minus).map(|(p, m)| p - m).collect();
        let b = -0.5 * (dot(&mu_plus, &mu_plus) - dot(&mu_minus, &mu_minus));
        let eta = 0.5 * dot(&w, &w).sqrt();
        Self {
            mu_plus,
            mu_minus,
            w,
            b,
            eta,
        }
    }

    /// `(w·z + b) / ‖w‖`.
    pub fn signed_distance(&self, z: &[f64]) -> f64 {
        (dot(&self.w, z) + self.b) / dot(&self.w, &self.w).sqrt()
    }
}

/// Margin and separability diagnostics; parts without the data they need are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub d_plus_min: Option<f64>,
    pub d_minus_max: Option<f64>,
    pub margin: Option<f64>,
    pub hyperplane: Option<Hyperplane>,
    pub train_accuracy: Option<f64>,
}

fn centroid(points: &[&Vec<f64>]) -> Vec<f64> {
    let mut c = vec![0.0; points[0].len()];
    for p in points {
        for (o, v) in c.iter_mut().zip(p.iter()) {
            *o += v;
        }
    }
    c.iter_mut().for_each(|v| *v /= points.len() as f64);
    c
}

/// Smallest clear-pair distance minus largest ambiguous-pair distance.
pub fn margin_from_distances(
    clear: &[f64],
    ambiguous: &[f64],
) -> (Option<f64>, Option<f64>, Option<f64>) {
    let d_plus_min = clear.iter().copied().reduce(f64::min);
    let d_minus_max = ambiguous.iter().copied().reduce(f64::max);
    let margin = d_plus_min.zip(d_minus_max).map(|(p, m)| p - m);
    (d_plus_min, d_minus_max, margin)
}

/// Accuracy counts every appearance of a segment in a clear triple: the preferred
/// side should lie on the positive side of the hyperplane and the other side on the negative.
pub fn separation_report<S: Scalar>(
    model: &EmbeddingModel<S>,
    prefs: &PreferenceDataset<S>,
    metric: DistanceMetric,
) -> Result<SeparationReport> {
    let mut z: BTreeMap<SegmentId, Vec<f64>> = BTreeMap::new();
    for seg in prefs.segments() {
        z.insert(
            seg.id,
            model
                .encode(&seg)?
                .into_iter()
                .map(|v| v.as_f64())
                .collect(),
        );
    }
    let dist = |a: SegmentId, b: SegmentId| metric.distance(&z[&a], &z[&b]);
    let clear_d: Vec<f64> = prefs.clear().map(|t| dist(t.seg0.id, t.seg1.id)).collect();
    let amb_d: Vec<f64> = prefs
        .ambiguous()
        .map(|t| dist(t.seg0.id, t.seg1.id))
        .collect();
    let (d_plus_min, d_minus_max, margin) = margin_from_distances(&clear_d, &amb_d);

    let (plus, minus): (Vec<&Vec<f64>>, Vec<&Vec<f64>>) = prefs
        .clear()
        .filter_map(|t| t.ranked())
        .map(|(p, m)| (&z[&p.id], &z[&m.id]))
        .unzip();
    let (hyperplane, train_accuracy) = if plus.is_empty() {
        (None, None)
    } else {
        let h = Hyperplane::from_centroids(centroid(&plus), centroid(&minus));
        let correct = plus.iter().filter(|p| h.signed_distance(p) > 0.0).count()
            + minus.iter().filter(|m| h.signed_distance(m) < 0.0).count();
        let acc = correct as f64 / (plus.len() + minus.len()) as f64;
        (Some(h), Some(acc))
    };
    Ok(SeparationReport {
        d_plus_min,
        d_minus_max,
        margin,
        hyperplane,
        train_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_arithmetic() {
        assert_eq!(
            margin_from_distances(&[5.0, 7.0], &[1.0, 2.0]),
            (Some(5.0), Some(2.0), Some(3.0))
        );
        assert_eq!(margin_from_distances(&[5.0], &[]), (Some(5.0), None, None));
    }

    #[test]
    fn centroid_hyperplane() {
        let h = Hyperplane::from_centroids(vec![2.0, 0.0], vec![0.0, 0.0]);
        assert_eq!(h.w, vec![2.0, 0.0]);
        assert_eq!(h.b, -2.0);
        assert_eq!(h.signed_distance(&[2.0, 0.0]), 1.0);
        assert_eq!(h.eta, 1.0);
        assert_eq!(h.signed_distance(&[0.0, 0.0]), -1.0);
    }
}
