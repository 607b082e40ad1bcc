//! Skipgram and CBOW training with negative sampling.

mod model;
mod params;
mod sampler;
pub mod sgns;
mod train;

pub use model::{EmbeddingModel, WordVectors};
pub use params::{HyperParams, ModelKind};
pub use sampler::NegativeSampler;
pub use train::{
    context_bounds, sample_window, train, EpochStats, TrainOptions, TrainStats, Trainer, MIN_LEARNING_RATE,
};
