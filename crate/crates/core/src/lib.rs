//! Contrastive query selection for offline preference-based reward learning.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`, and [`f32`](mod@f32) holds the single-precision set.

pub mod data;
pub mod embedding;
pub mod envs;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod nn;
pub mod optim;
pub mod reward;
pub mod scalar;
pub mod seed;
pub mod selection;
pub mod stats;
pub mod teacher;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Segment = data::Segment<f64>;
pub type Episode = data::Episode<f64>;
pub type OfflineDataset = data::OfflineDataset<f64>;
pub type PreferenceTriple = data::PreferenceTriple<f64>;
pub type PreferenceDataset = data::PreferenceDataset<f64>;
pub type RewardNet = reward::RewardNet<f64>;
pub type RewardEnsemble = reward::RewardEnsemble<f64>;

/// Single-precision aliases.
pub mod f32 {
    pub type Segment = crate::data::Segment<f32>;
    pub type Episode = crate::data::Episode<f32>;
    pub type OfflineDataset = crate::data::OfflineDataset<f32>;
    pub type PreferenceTriple = crate::data::PreferenceTriple<f32>;
    pub type PreferenceDataset = crate::data::PreferenceDataset<f32>;
    pub type RewardNet = crate::reward::RewardNet<f32>;
    pub type RewardEnsemble = crate::reward::RewardEnsemble<f32>;
}
