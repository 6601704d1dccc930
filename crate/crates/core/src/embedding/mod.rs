//! Contrastive segment embeddings: models, losses, training, separation
//! diagnostics and export.

mod export;
pub mod fixtures;
mod losses;
mod metric;
mod model;
mod separation;
mod train;

pub use export::{export_embeddings, project_pca, EmbeddingCheckpoint, ProjectedRow};
pub use losses::{
    amb_on_embeddings, loss_amb, loss_norm, loss_quad, loss_recon, norm_on_embeddings,
    quad_on_embeddings, total_loss, LossBatch, LossValues, LossWeights,
};
pub use metric::DistanceMetric;
pub use model::{EmbeddingMode, EmbeddingModel, EncoderConfig, EncoderEmbedding, TableEmbedding};
pub use separation::{margin_from_distances, separation_report, Hyperplane, SeparationReport};
pub use train::{train_embedding, LossRecord, ReconSource, TrainConfig};
