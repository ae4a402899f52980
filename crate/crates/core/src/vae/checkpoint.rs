use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::config::TrainConfig;
use super::model::{BetaVae, EpochRecord};
use crate::container::{Blob, Container};
use crate::error::{Error, Result};
use crate::scalar::{cast_slice, Scalar};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
const CHECKPOINT_KIND: [u8; 4] = *b"CKPT";
const WEIGHTS_KIND: [u8; 4] = *b"WGHT";

pub(crate) fn blob<T: Scalar>(v: &[T]) -> Blob {
    if T::DTYPE == "f32" {
        Blob::F32(cast_slice(v))
    } else {
        Blob::F64(cast_slice(v))
    }
}

pub(crate) fn fill<T: Scalar>(c: &Container, name: &str, dst: &mut [T]) -> Result<()> {
    let e = c.get(name)?;
    if e.blob.len() != dst.len() {
        return Err(Error::contract(format!(
            "tensor `{name}` has {} values, model expects {}",
            e.blob.len(),
            dst.len()
        )));
    }
    for (d, v) in dst.iter_mut().zip(e.blob.to_f64()) {
        *d = T::from_f64_lossy(v);
    }
    Ok(())
}

impl<T: Scalar> BetaVae<T> {
    /// Serialise configuration, training history, parameters and running statistics.
    pub fn to_container(&self) -> Container {
        let meta = json!({ "config": self.config, "history": self.history, "dtype": T::DTYPE });
        let mut c = Container::new(CHECKPOINT_KIND, CHECKPOINT_SCHEMA_VERSION, meta);
        let mut copy = self.clone();
        for (name, p) in copy.params_mut() {
            c.insert(name, p.shape.clone(), blob(&p.value));
        }
        for (name, b) in copy.buffers_mut() {
            c.insert(name, vec![b.len()], blob(b));
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let config: TrainConfig = serde_json::from_value(
            c.meta.get("config").cloned().ok_or_else(|| Error::contract("checkpoint has no config"))?,
        )?;
        let history: Vec<EpochRecord> =
            serde_json::from_value(c.meta.get("history").cloned().unwrap_or_else(|| json!([])))?;
        let mut vae = BetaVae::untrained(&config, &mut ChaCha8Rng::seed_from_u64(0));
        for (name, p) in vae.params_mut() {
            fill(c, &name, &mut p.value)?;
        }
        for (name, b) in vae.buffers_mut() {
            fill(c, &name, b)?;
        }
        vae.history = history;
        Ok(vae)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    /// Load a checkpoint; a different schema version is an [`Error::Schema`].
    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path, CHECKPOINT_KIND, CHECKPOINT_SCHEMA_VERSION)?)
    }

    /// Export the encoder weights in the format accepted by `backbone_weights`.
    pub fn save_encoder_weights(&self, path: &Path) -> Result<()> {
        let mut c = Container::new(WEIGHTS_KIND, CHECKPOINT_SCHEMA_VERSION, json!({ "dtype": T::DTYPE }));
        let mut copy = self.clone();
        for (name, p) in copy.params_mut().into_iter().filter(|(n, _)| n.starts_with("encoder.")) {
            c.insert(name, p.shape.clone(), blob(&p.value));
        }
        for (name, b) in copy.buffers_mut().into_iter().filter(|(n, _)| n.starts_with("encoder.")) {
            c.insert(name, vec![b.len()], blob(b));
        }
        c.save(path)
    }
}

/// Overwrite every encoder tensor from an external weight file.
pub(crate) fn load_backbone<T: Scalar>(vae: &mut BetaVae<T>, path: &Path) -> Result<()> {
    let c = Container::load(path, WEIGHTS_KIND, CHECKPOINT_SCHEMA_VERSION).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read backbone weights {}: {io}", path.display())),
        other => other,
    })?;
    for (name, p) in vae.params_mut().into_iter().filter(|(n, _)| n.starts_with("encoder.")) {
        fill(&c, &name, &mut p.value).map_err(|e| Error::Config(format!("backbone weights: {e}")))?;
    }
    for (name, b) in vae.buffers_mut().into_iter().filter(|(n, _)| n.starts_with("encoder.")) {
        fill(&c, &name, b).map_err(|e| Error::Config(format!("backbone weights: {e}")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::config::EncoderKind;
    use super::super::model::tests::tiny_config;
    use super::*;

    #[test]
    fn checkpoint_round_trip_preserves_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vae = BetaVae::<f32>::new(&tiny_config(), &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        vae.save_checkpoint(&p).unwrap();
        let back = BetaVae::<f32>::load_checkpoint(&p).unwrap();
        assert_eq!(back, vae);
        let img = vec![0.3f32; 128];
        assert_eq!(back.encode(&img).unwrap(), vae.encode(&img).unwrap());
    }

    #[test]
    fn schema_mismatch_is_explicit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vae = BetaVae::<f32>::new(&tiny_config(), &mut rng).unwrap();
        let mut c = vae.to_container();
        c.schema_version = 99;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        c.save(&p).unwrap();
        match BetaVae::<f32>::load_checkpoint(&p) {
            Err(Error::Schema { expected: 1, found: 99 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn resnet_backbone_needs_weights_and_loads_them() {
        let base = TrainConfig {
            encoder_kind: EncoderKind::ResnetBackbone,
            resnet_blocks: [1, 1, 1, 1],
            latent_dim: 4,
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(BetaVae::<f32>::new(&base, &mut rng), Err(Error::Config(_))));

        let dir = tempfile::tempdir().unwrap();
        let w = dir.path().join("backbone.bin");
        let donor = BetaVae::<f32>::untrained(&base, &mut ChaCha8Rng::seed_from_u64(9));
        donor.save_encoder_weights(&w).unwrap();
        let cfg = TrainConfig { backbone_weights: Some(w), ..base.clone() };
        let vae = BetaVae::<f32>::new(&cfg, &mut rng).unwrap();
        assert_eq!(vae.encoder, donor.encoder);
        let p = vae.encode(&vec![0.2f32; 32 * 32 * 3]).unwrap();
        assert_eq!(p.mu.len(), 4);

        let missing = TrainConfig { backbone_weights: Some(dir.path().join("nope.bin")), ..base };
        assert!(matches!(BetaVae::<f32>::new(&missing, &mut rng), Err(Error::Config(_))));
    }
}
