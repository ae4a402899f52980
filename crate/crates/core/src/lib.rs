//! Shortcut detection for labeled image datasets.
//!
//! A Beta-VAE is trained on the images, every latent dimension is scored by how
//! well it separates the classes (maximum pairwise Wasserstein distance and
//! linear-probe predictiveness), and the top candidates get the visual evidence
//! a human judge needs to call each one a shortcut or a valid feature.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Index loops are kept
// where several arrays are walked in lockstep.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod advgen;
pub mod analysis;
pub mod container;
pub mod data;
pub mod error;
pub mod fsutil;
pub mod imageops;
pub mod nn;
pub mod pipeline;
pub mod probe;
pub mod runstore;
pub mod scalar;
pub mod vae;
pub mod visual;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision aliases used by the binaries.
pub type Vae = vae::BetaVae<f32>;
pub type Latents = analysis::LatentTable<f32>;
pub type Probe = probe::ProbeHead<f32>;
pub type ReferenceClassifier = advgen::ReferenceCnn<f32>;
