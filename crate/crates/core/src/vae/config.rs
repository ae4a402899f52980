use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::loss::ReconLoss;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Stride-2 convolution stack with batch norm and ReLU.
    #[default]
    SmallConv,
    /// Residual backbone initialised from externally supplied weights.
    ResnetBackbone,
}

/// Hyperparameters and architecture of a Beta-VAE run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub beta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub image_size: usize,
    pub channels: usize,
    pub encoder_kind: EncoderKind,
    /// Output channels of each stride-2 encoder convolution (`small_conv`).
    pub encoder_channels: Vec<usize>,
    /// Input channels of each stride-2 decoder transposed convolution.
    pub decoder_channels: Vec<usize>,
    /// Residual blocks per stage (`resnet_backbone`, four stages).
    pub resnet_blocks: [usize; 4],
    /// Weight file for `resnet_backbone` (container of `encoder.*` tensors).
    pub backbone_weights: Option<PathBuf>,
    pub recon_loss: ReconLoss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            latent_dim: 10,
            beta: 1.0,
            learning_rate: 0.001,
            batch_size: 32,
            patience: 10,
            max_epochs: 100,
            image_size: 32,
            channels: 3,
            encoder_kind: EncoderKind::SmallConv,
            encoder_channels: vec![32, 64, 128, 256, 512],
            decoder_channels: vec![512, 256, 128, 64, 32],
            resnet_blocks: [2, 2, 2, 2],
            backbone_weights: None,
            recon_loss: ReconLoss::Bce,
            seed: 0,
        }
    }
}

pub(crate) const RESNET_WIDTHS: [usize; 4] = [64, 128, 256, 512];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1".into());
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2".into());
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return bad("patience and max_epochs must be at least 1".into());
        }
        if self.channels == 0 || self.image_size == 0 {
            return bad("image_size and channels must be positive".into());
        }
        if self.decoder_channels.is_empty() || self.decoder_channels.contains(&0) {
            return bad("decoder_channels must be non-empty and positive".into());
        }
        let dec_factor = 1usize << self.decoder_channels.len();
        if !self.image_size.is_multiple_of(dec_factor) {
            return bad(format!("image_size {} is not divisible by {dec_factor}", self.image_size));
        }
        match self.encoder_kind {
            EncoderKind::SmallConv => {
                if self.encoder_channels.is_empty() || self.encoder_channels.contains(&0) {
                    return bad("encoder_channels must be non-empty and positive".into());
                }
                let f = 1usize << self.encoder_channels.len();
                if !self.image_size.is_multiple_of(f) {
                    return bad(format!("image_size {} is not divisible by {f}", self.image_size));
                }
            }
            EncoderKind::ResnetBackbone => {
                if self.backbone_weights.is_none() {
                    return bad("encoder_kind resnet_backbone requires backbone_weights".into());
                }
                if !self.image_size.is_multiple_of(32) {
                    return bad(format!("resnet_backbone needs image_size divisible by 32, got {}", self.image_size));
                }
                if self.resnet_blocks.contains(&0) {
                    return bad("resnet_blocks entries must be at least 1".into());
                }
            }
        }
        Ok(())
    }

    /// Width of the flattened encoder output feeding the two heads.
    pub(crate) fn feature_width(&self) -> usize {
        match self.encoder_kind {
            EncoderKind::SmallConv => {
                let s = self.image_size >> self.encoder_channels.len();
                self.encoder_channels.last().copied().unwrap_or(0) * s * s
            }
            EncoderKind::ResnetBackbone => RESNET_WIDTHS[3],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        assert_eq!(TrainConfig::default().feature_width(), 512);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        type Edit = Box<dyn Fn(&mut TrainConfig)>;
        let cases: Vec<Edit> = vec![
            Box::new(|c| c.latent_dim = 0),
            Box::new(|c| c.beta = 0.0),
            Box::new(|c| c.beta = -1.0),
            Box::new(|c| c.image_size = 48),
            Box::new(|c| c.batch_size = 1),
            Box::new(|c| c.encoder_kind = EncoderKind::ResnetBackbone),
        ];
        for mutate in cases {
            let mut c = TrainConfig::default();
            mutate(&mut c);
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<TrainConfig>("latent_dim = 4\nbogus = 1").is_err());
        let c: TrainConfig = toml::from_str("latent_dim = 4\nbeta = 2.5").unwrap();
        assert_eq!((c.latent_dim, c.beta, c.batch_size), (4, 2.5, 32));
    }
}
