use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::model::EmbeddingModel;
use crate::data::Segment;
use crate::error::{Error, Result};
use crate::optim::Optimizer;
use crate::reward::MinMax;
use crate::scalar::Scalar;
use crate::stats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectedRow {
    pub segment_id: String,
    pub pc1: f64,
    pub pc2: f64,
    pub true_return_normalized: f64,
}

/// Orients `v` so its largest-magnitude entry is positive.
fn canonical_sign(v: &mut [f64]) {
    let k = (0..v.len()).fold(
        0,
        |best, i| if v[i].abs() > v[best].abs() { i } else { best },
    );
    if v[k] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Projection of centered points onto the two leading covariance eigenvectors.
///
/// The first component is oriented to correlate non-negatively with `returns`.
pub fn project_pca(points: &[Vec<f64>], returns: &[f64]) -> Result<Vec<[f64; 2]>> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(
            "projection needs at least 2 segments".into(),
        ));
    }
    let (n, d) = (points.len(), points[0].len());
    let mean: Vec<f64> = (0..d)
        .map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, d, |i, k| points[i][k] - mean[k]);
    let cov = centered.transpose() * &centered / n as f64;
    if cov.trace() <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let axis = |j: usize| -> Vec<f64> {
        let mut v: Vec<f64> = eig.eigenvectors.column(order[j]).iter().copied().collect();
        canonical_sign(&mut v);
        v
    };
    let project = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..d).map(|k| centered[(i, k)] * v[k]).sum())
            .collect()
    };
    let mut pc1 = project(&axis(0));
    if stats::pearson(&pc1, returns) < 0.0 {
        pc1.iter_mut().for_each(|x| *x = -*x);
    }
    let pc2 = if d > 1 {
        project(&axis(1))
    } else {
        vec![0.0; n]
    };
    Ok(pc1.into_iter().zip(pc2).map(|(a, b)| [a, b]).collect())
}

/// Writes `segment_id,pc1,pc2,true_return_normalized` rows for `segments`.
pub fn export_embeddings<S: Scalar>(
    model: &EmbeddingModel<S>,
    segments: &[&Segment<S>],
    path: &Path,
) -> Result<Vec<ProjectedRow>> {
    let z: Vec<Vec<f64>> = segments
        .iter()
        .map(|s| Ok(model.encode(s)?.into_iter().map(|v| v.as_f64()).collect()))
        .collect::<Result<_>>()?;
    let returns: Vec<f64> = segments.iter().map(|s| s.true_return.as_f64()).collect();
    let proj = project_pca(&z, &returns)?;
    let scale = MinMax::fit(returns.iter().copied());
    let rows: Vec<ProjectedRow> = segments
        .iter()
        .zip(proj)
        .zip(&returns)
        .map(|((s, p), &r)| ProjectedRow {
            segment_id: s.id.to_string(),
            pc1: p[0],
            pc2: p[1],
            true_return_normalized: scale.apply(r),
        })
        .collect();
    let mut w = csv::Writer::from_path(path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

/// Model parameters and optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct EmbeddingCheckpoint<S> {
    pub schema_version: u32,
    pub model: EmbeddingModel<S>,
    pub optimizer: Option<Optimizer<S>>,
}

impl<S: Scalar> EmbeddingCheckpoint<S> {
    pub fn new(model: EmbeddingModel<S>, optimizer: Option<Optimizer<S>>) -> Self {
        Self {
            schema_version: crate::data::SCHEMA_VERSION,
            model,
            optimizer,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if ck.schema_version != crate::data::SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint schema version {}",
                ck.schema_version
            )));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SegmentId;
    use crate::embedding::EncoderConfig;
    use crate::optim::OptimizerKind;
    use crate::seed;

    #[test]
    fn axis_aligned_input_is_reproduced() {
        let pts = vec![vec![-2.0, 0.5], vec![0.0, -1.0], vec![2.0, 0.5]];
        let proj = project_pca(&pts, &[0.0, 1.0, 2.0]).unwrap();
        for (p, q) in pts.iter().zip(&proj) {
            assert!((p[0] - q[0]).abs() < 1e-12);
            assert!((p[1].abs() - q[1].abs()).abs() < 1e-12);
        }
        let flipped = project_pca(&pts, &[2.0, 1.0, 0.0]).unwrap();
        assert!((flipped[0][0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            project_pca(&vec![vec![1.0, 1.0]; 3], &[0.0, 1.0, 2.0]),
            Err(Error::ZeroVariance)
        ));
        assert!(project_pca(&[vec![1.0, 1.0]], &[0.0]).is_err());
    }

    #[test]
    fn csv_columns_and_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let segs: Vec<Segment<f64>> = (0..4)
            .map(|i| {
                Segment::new(
                    SegmentId::new(i, 0),
                    vec![vec![i as f64]],
                    vec![vec![0.0]],
                    vec![i as f64],
                )
                .unwrap()
            })
            .collect();
        let model = EmbeddingModel::<f64>::table(segs.iter().map(|s| s.id), 3, &mut seed::rng(2));
        let refs: Vec<&Segment<f64>> = segs.iter().collect();
        let path = dir.path().join("emb.csv");
        export_embeddings(&model, &refs, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("segment_id,pc1,pc2,true_return_normalized\n"));
        assert_eq!(text.lines().count(), 5);

        let enc =
            EmbeddingModel::<f64>::encoder(2, 1, 4, &EncoderConfig::default(), &mut seed::rng(5));
        let ck = EmbeddingCheckpoint::new(
            enc.clone(),
            Some(Optimizer::new(OptimizerKind::Adam, 1e-3, enc.num_params())),
        );
        let p = dir.path().join("ck.json");
        ck.save(&p).unwrap();
        assert_eq!(EmbeddingCheckpoint::<f64>::load(&p).unwrap(), ck);
    }
}
