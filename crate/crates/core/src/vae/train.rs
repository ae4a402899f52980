use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::TrainConfig;
use super::model::{BetaVae, EpochRecord};
use crate::data::LabeledImageSet;
use crate::error::{Error, Result};
use crate::nn::{Adam, Mode, Tensor};
use crate::scalar::Scalar;

fn check_geometry(set: &LabeledImageSet, cfg: &TrainConfig, which: &str) -> Result<()> {
    if set.height != cfg.image_size || set.width != cfg.image_size || set.channels != cfg.channels {
        return Err(Error::Config(format!(
            "{which} images are {}×{}×{}, model expects {}×{}×{}",
            set.height, set.width, set.channels, cfg.image_size, cfg.image_size, cfg.channels
        )));
    }
    Ok(())
}

fn batch_tensor<T: Scalar>(set: &LabeledImageSet, idx: &[usize]) -> Tensor<T> {
    let imgs: Vec<Vec<T>> =
        idx.iter().map(|i| set.image(*i).iter().map(|v| T::from_f64_lossy(*v as f64)).collect()).collect();
    let refs: Vec<&[T]> = imgs.iter().map(|v| v.as_slice()).collect();
    Tensor::from_hwc_batch(&refs, set.height, set.width, set.channels)
}

fn normal_noise<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    (0..n)
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            T::from_f64_lossy(e)
        })
        .collect()
}

#[derive(Default)]
struct Sums {
    total: f64,
    recon: f64,
    kl: f64,
    n: usize,
}

impl Sums {
    fn add(&mut self, total: f64, recon: f64, kl: f64, b: usize) {
        self.total += total * b as f64;
        self.recon += recon * b as f64;
        self.kl += kl * b as f64;
        self.n += b;
    }

    fn mean(&self) -> (f64, f64, f64) {
        let n = self.n.max(1) as f64;
        (self.total / n, self.recon / n, self.kl / n)
    }
}

/// Mean loss over `set` in inference mode with a fixed noise stream.
pub fn evaluate<T: Scalar>(vae: &BetaVae<T>, set: &LabeledImageSet, seed: u64) -> Result<(f64, f64, f64)> {
    check_geometry(set, &vae.config, "evaluation")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = Sums::default();
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(vae.config.batch_size.max(64)) {
        let x = batch_tensor::<T>(set, chunk);
        let eps = normal_noise::<T>(chunk.len() * vae.latent_dim(), &mut rng);
        let f = vae.forward(&x, &eps, Mode::Eval);
        let t = vae.terms(&x, &f);
        sums.add(t.total.as_f64(), t.recon.as_f64(), t.kl.as_f64(), chunk.len());
    }
    Ok(sums.mean())
}

/// Train a Beta-VAE with Adam and early stopping on validation loss.
///
/// Returns the parameters from the epoch with the lowest validation loss
/// (training loss when `val` is empty). `on_epoch` sees every epoch record as
/// it is produced. A non-finite loss aborts with [`Error::Training`].
pub fn train_vae<T: Scalar>(
    train: &LabeledImageSet,
    val: &LabeledImageSet,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<BetaVae<T>> {
    config.validate()?;
    check_geometry(train, config, "training")?;
    if !val.is_empty() {
        check_geometry(val, config, "validation")?;
    }
    if train.len() < 2 {
        return Err(Error::Config("training split needs at least 2 samples".into()));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut vae = BetaVae::<T>::new(config, &mut init_rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut adam = Adam::<T>::new(config.learning_rate);
    let val_seed = config.seed.wrapping_add(2);

    let mut best: Option<(f64, BetaVae<T>)> = None;
    let mut since_best = 0usize;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut sums = Sums::default();
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue; // batch norm needs at least two samples
            }
            let x = batch_tensor::<T>(train, chunk);
            let eps = normal_noise::<T>(chunk.len() * config.latent_dim, &mut rng);
            let (terms, fwd) = vae.backprop_tensor(&x, &eps);
            if !terms.total.is_finite() {
                return Err(Error::Training { epoch, message: format!("non-finite training loss {}", terms.total) });
            }
            vae.absorb(&fwd);
            let mut params: Vec<_> = vae.params_mut().into_iter().map(|(_, p)| p).collect();
            adam.step(&mut params);
            sums.add(terms.total.as_f64(), terms.recon.as_f64(), terms.kl.as_f64(), chunk.len());
        }
        let (train_loss, train_recon, train_kl) = sums.mean();
        let (val_loss, val_recon, val_kl) =
            if val.is_empty() { (train_loss, train_recon, train_kl) } else { evaluate(&vae, val, val_seed)? };
        if !val_loss.is_finite() {
            return Err(Error::Training { epoch, message: format!("non-finite validation loss {val_loss}") });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            train_recon,
            train_kl,
            val_loss,
            val_recon,
            val_kl,
            seconds: started.elapsed().as_secs_f64(),
        };
        info!("epoch {epoch}: train {train_loss:.4} val {val_loss:.4} ({:.1}s)", record.seconds);
        on_epoch(&record);
        history.push(record);
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, vae.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let (_, mut best) = best.expect("at least one epoch");
    best.history = history;
    Ok(best)
}
