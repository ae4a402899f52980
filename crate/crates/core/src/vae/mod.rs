//! Beta-VAE: architecture, loss, training with early stopping and checkpoints.

pub(crate) mod checkpoint;
mod config;
mod loss;
mod model;
mod train;
mod tuning;

pub use checkpoint::CHECKPOINT_SCHEMA_VERSION;
pub use config::{EncoderKind, TrainConfig};
pub use loss::{bernoulli_nll, kl_divergence, reparameterize, PosteriorParams, ReconLoss};
pub use model::{total_loss, BetaVae, EpochRecord, LossTerms};
pub use train::{evaluate, train_vae};
pub use tuning::{suggest_hyperparams, DimensionVariance, DimensionVarianceReport, Recommendation};
