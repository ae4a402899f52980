use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{EncoderKind, TrainConfig, RESNET_WIDTHS};
use super::loss::{kl_from_logvar, recon_from_logits, PosteriorParams};
use crate::error::{Error, Result};
use crate::nn::{
    sigmoid, BatchNorm2d, Cache, Conv2d, ConvTranspose2d, Dims, Layer, Linear, Mode, Param, Residual, Sequential,
    Tensor,
};
use crate::scalar::Scalar;

/// Per-epoch training record; one JSON line each in the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_recon: f64,
    pub train_kl: f64,
    pub val_loss: f64,
    pub val_recon: f64,
    pub val_kl: f64,
    pub seconds: f64,
}

/// Batch-averaged loss terms; `total = recon + beta·kl`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms<T> {
    pub total: T,
    pub recon: T,
    pub kl: T,
}

/// `recon + beta·kl`.
pub fn total_loss<T: Scalar>(recon: T, kl: T, beta: T) -> T {
    recon + beta * kl
}

/// Beta-VAE: convolutional encoder with separate mean and log-variance heads,
/// and a transposed-convolution decoder producing per-pixel Bernoulli logits.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaVae<T> {
    pub(crate) config: TrainConfig,
    pub(crate) encoder: Sequential<T>,
    pub(crate) mu_head: Linear<T>,
    pub(crate) logvar_head: Linear<T>,
    pub(crate) decoder: Sequential<T>,
    pub(crate) history: Vec<EpochRecord>,
}

pub(crate) struct Forward<T> {
    enc: Vec<Cache<T>>,
    mu_cache: Cache<T>,
    lv_cache: Cache<T>,
    dec: Vec<Cache<T>>,
    mu: Tensor<T>,
    logvar: Tensor<T>,
    logits: Tensor<T>,
}

fn conv_bn_relu<T: Scalar, R: Rng>(layers: &mut Vec<Layer<T>>, i: usize, o: usize, k: usize, s: usize, rng: &mut R) {
    layers.push(Layer::Conv2d(Conv2d::new(i, o, k, s, k / 2, rng)));
    layers.push(Layer::BatchNorm2d(BatchNorm2d::new(o)));
    layers.push(Layer::Relu);
}

fn basic_block<T: Scalar, R: Rng>(i: usize, o: usize, stride: usize, rng: &mut R) -> Layer<T> {
    let mut main = Vec::new();
    conv_bn_relu(&mut main, i, o, 3, stride, rng);
    main.push(Layer::Conv2d(Conv2d::new(o, o, 3, 1, 1, rng)));
    main.push(Layer::BatchNorm2d(BatchNorm2d::new(o)));
    let shortcut = (stride != 1 || i != o).then(|| {
        Sequential::new(vec![
            Layer::Conv2d(Conv2d::new(i, o, 1, stride, 0, rng)),
            Layer::BatchNorm2d(BatchNorm2d::new(o)),
        ])
    });
    Layer::Residual(Box::new(Residual { main: Sequential::new(main), shortcut }))
}

fn build_encoder<T: Scalar, R: Rng>(cfg: &TrainConfig, rng: &mut R) -> Sequential<T> {
    let mut layers = Vec::new();
    match cfg.encoder_kind {
        EncoderKind::SmallConv => {
            let mut in_c = cfg.channels;
            for &c in &cfg.encoder_channels {
                conv_bn_relu(&mut layers, in_c, c, 3, 2, rng);
                in_c = c;
            }
            layers.push(Layer::Flatten);
        }
        EncoderKind::ResnetBackbone => {
            // 7×7 stride-2 stem, 2×2 pool, then four stages; the last three downsample.
            conv_bn_relu(&mut layers, cfg.channels, RESNET_WIDTHS[0], 7, 2, rng);
            layers.push(Layer::MaxPool2);
            let mut in_c = RESNET_WIDTHS[0];
            for (stage, (&w, &blocks)) in RESNET_WIDTHS.iter().zip(&cfg.resnet_blocks).enumerate() {
                for b in 0..blocks {
                    let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                    layers.push(basic_block(in_c, w, stride, rng));
                    in_c = w;
                }
            }
            layers.push(Layer::GlobalAvgPool);
        }
    }
    Sequential::new(layers)
}

fn build_decoder<T: Scalar, R: Rng>(cfg: &TrainConfig, rng: &mut R) -> Sequential<T> {
    let dc = &cfg.decoder_channels;
    let s0 = cfg.image_size >> dc.len();
    let mut layers = vec![
        Layer::Linear(Linear::new(cfg.latent_dim, dc[0] * s0 * s0, rng)),
        Layer::Unflatten { c: dc[0], h: s0, w: s0 },
    ];
    for (i, &c) in dc.iter().enumerate() {
        let out = dc.get(i + 1).copied().unwrap_or(c);
        layers.push(Layer::ConvTranspose2d(ConvTranspose2d::new(c, out, 3, 2, 1, 1, rng)));
        layers.push(Layer::BatchNorm2d(BatchNorm2d::new(out)));
        layers.push(Layer::Relu);
    }
    let last = *dc.last().expect("non-empty decoder");
    layers.push(Layer::Conv2d(Conv2d::new(last, cfg.channels, 3, 1, 1, rng)));
    Sequential::new(layers)
}

impl<T: Scalar> BetaVae<T> {
    /// Randomly initialised model. `resnet_backbone` encoders additionally load
    /// their weights from `config.backbone_weights`.
    pub fn new<R: Rng>(config: &TrainConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut vae = Self::untrained(config, rng);
        if let (EncoderKind::ResnetBackbone, Some(path)) = (config.encoder_kind, &config.backbone_weights) {
            super::checkpoint::load_backbone(&mut vae, path)?;
        }
        Ok(vae)
    }

    pub(crate) fn untrained<R: Rng>(config: &TrainConfig, rng: &mut R) -> Self {
        let encoder = build_encoder(config, rng);
        let f = config.feature_width();
        let mu_head = Linear::new(f, config.latent_dim, rng);
        let logvar_head = Linear::new(f, config.latent_dim, rng);
        let decoder = build_decoder(config, rng);
        BetaVae { config: config.clone(), encoder, mu_head, logvar_head, decoder, history: Vec::new() }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn beta(&self) -> f64 {
        self.config.beta
    }

    /// Per-epoch records of the training run that produced this model.
    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn image_len(&self) -> usize {
        self.config.image_size * self.config.image_size * self.config.channels
    }

    /// All trainable parameters with stable, prefixed names.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out: Vec<(String, &mut Param<T>)> =
            self.encoder.params_mut().into_iter().map(|(n, p)| (format!("encoder.{n}"), p)).collect();
        out.push(("mu_head.weight".into(), &mut self.mu_head.weight));
        out.push(("mu_head.bias".into(), &mut self.mu_head.bias));
        out.push(("logvar_head.weight".into(), &mut self.logvar_head.weight));
        out.push(("logvar_head.bias".into(), &mut self.logvar_head.bias));
        out.extend(self.decoder.params_mut().into_iter().map(|(n, p)| (format!("decoder.{n}"), p)));
        out
    }

    /// Batch-norm running statistics with stable, prefixed names.
    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<T>)> {
        let mut out: Vec<(String, &mut Vec<T>)> =
            self.encoder.buffers_mut().into_iter().map(|(n, p)| (format!("encoder.{n}"), p)).collect();
        out.extend(self.decoder.buffers_mut().into_iter().map(|(n, p)| (format!("decoder.{n}"), p)));
        out
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|(_, p)| p.value.len()).sum()
    }

    fn check_images(&self, images: &[&[T]]) -> Result<()> {
        let want = self.image_len();
        match images.iter().position(|im| im.len() != want) {
            Some(i) => Err(Error::contract(format!(
                "image {i} has {} values, expected {want} ({}×{}×{})",
                images[i].len(),
                self.config.image_size,
                self.config.image_size,
                self.config.channels
            ))),
            None => Ok(()),
        }
    }

    fn to_tensor(&self, images: &[&[T]]) -> Tensor<T> {
        let s = self.config.image_size;
        Tensor::from_hwc_batch(images, s, s, self.config.channels)
    }

    fn posterior_rows(mu: &Tensor<T>, logvar: &Tensor<T>) -> Vec<PosteriorParams<T>> {
        let half = T::from_f64_lossy(0.5);
        (0..mu.batch())
            .map(|i| PosteriorParams {
                mu: mu.row(i).to_vec(),
                sigma: logvar.row(i).iter().map(|lv| (half * *lv).exp()).collect(),
            })
            .collect()
    }

    /// Posterior parameters for a batch of `H×W×C` images (inference mode).
    pub fn encode_batch(&self, images: &[&[T]]) -> Result<Vec<PosteriorParams<T>>> {
        self.check_images(images)?;
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(128) {
            let h = self.encoder.infer(&self.to_tensor(chunk));
            let mu = self.mu_head.forward(&h).0;
            let logvar = self.logvar_head.forward(&h).0;
            out.extend(Self::posterior_rows(&mu, &logvar));
        }
        Ok(out)
    }

    pub fn encode(&self, image: &[T]) -> Result<PosteriorParams<T>> {
        Ok(self.encode_batch(&[image])?.remove(0))
    }

    /// Decoded images (`H×W×C`, values in `[0,1]`) for a batch of latent codes.
    pub fn decode_batch(&self, zs: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        let d = self.latent_dim();
        if let Some(z) = zs.iter().find(|z| z.len() != d) {
            return Err(Error::contract(format!("latent code has length {}, expected d = {d}", z.len())));
        }
        let mut out = Vec::with_capacity(zs.len());
        for chunk in zs.chunks(128) {
            let flat: Vec<T> = chunk.iter().flatten().copied().collect();
            let logits = self.decoder.infer(&Tensor::dense(chunk.len(), d, flat));
            let probs = Tensor::new(logits.dims, logits.data.iter().map(|l| sigmoid(*l)).collect());
            out.extend(probs.to_hwc_batch());
        }
        Ok(out)
    }

    pub fn decode(&self, z: &[T]) -> Result<Vec<T>> {
        Ok(self.decode_batch(&[z.to_vec()])?.remove(0))
    }

    pub(crate) fn forward(&self, x: &Tensor<T>, eps: &[T], mode: Mode) -> Forward<T> {
        let (h, enc) = self.encoder.forward_cached(x, mode);
        let (mu, mu_cache) = self.mu_head.forward(&h);
        let (logvar, lv_cache) = self.logvar_head.forward(&h);
        let half = T::from_f64_lossy(0.5);
        let z: Vec<T> =
            mu.data.iter().zip(&logvar.data).zip(eps).map(|((m, lv), e)| *m + (half * *lv).exp() * *e).collect();
        let (logits, dec) = self.decoder.forward_cached(&Tensor::dense(x.batch(), self.latent_dim(), z), mode);
        Forward { enc, mu_cache, lv_cache, dec, mu, logvar, logits }
    }

    pub(crate) fn terms(&self, x: &Tensor<T>, f: &Forward<T>) -> LossTerms<T> {
        let n = T::from_usize(x.batch()).expect("batch size");
        let recon: T = x
            .data
            .iter()
            .zip(&f.logits.data)
            .map(|(xi, l)| recon_from_logits(self.config.recon_loss, *xi, *l).0)
            .sum::<T>()
            / n;
        let kl = kl_from_logvar(&f.mu.data, &f.logvar.data) / n;
        let beta = T::from_f64_lossy(self.config.beta);
        LossTerms { total: total_loss(recon, kl, beta), recon, kl }
    }

    fn check_batch(&self, images: &[&[T]], eps: &[T]) -> Result<()> {
        self.check_images(images)?;
        if images.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        if eps.len() != images.len() * self.latent_dim() {
            return Err(Error::contract(format!(
                "eps has {} values, expected batch × d = {}",
                eps.len(),
                images.len() * self.latent_dim()
            )));
        }
        Ok(())
    }

    /// Batch loss with noise `eps` (row-major `batch × d`). `Mode::Train` uses
    /// batch statistics in batch norm, `Mode::Eval` the running statistics.
    pub fn loss(&self, images: &[&[T]], eps: &[T], mode: Mode) -> Result<LossTerms<T>> {
        self.check_batch(images, eps)?;
        let x = self.to_tensor(images);
        let f = self.forward(&x, eps, mode);
        Ok(self.terms(&x, &f))
    }

    /// Training-mode loss with parameter gradients left in every `Param::grad`
    /// (previous gradients are cleared). Running statistics are not updated.
    pub fn backprop(&mut self, images: &[&[T]], eps: &[T]) -> Result<LossTerms<T>> {
        self.check_batch(images, eps)?;
        let x = self.to_tensor(images);
        Ok(self.backprop_tensor(&x, eps).0)
    }

    pub(crate) fn backprop_tensor(&mut self, x: &Tensor<T>, eps: &[T]) -> (LossTerms<T>, Forward<T>) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
        let f = self.forward(x, eps, Mode::Train);
        let terms = self.terms(x, &f);
        let n = T::from_usize(x.batch()).expect("batch size");
        let kind = self.config.recon_loss;
        let g_logits = Tensor::new(
            f.logits.dims,
            x.data.iter().zip(&f.logits.data).map(|(xi, l)| recon_from_logits(kind, *xi, *l).1 / n).collect(),
        );
        let g_z = self.decoder.backward(&f.dec, &g_logits);
        let beta = T::from_f64_lossy(self.config.beta);
        let half = T::from_f64_lossy(0.5);
        let bn = beta / n;
        let mut g_mu = Vec::with_capacity(g_z.data.len());
        let mut g_lv = Vec::with_capacity(g_z.data.len());
        for i in 0..g_z.data.len() {
            let (m, lv, g) = (f.mu.data[i], f.logvar.data[i], g_z.data[i]);
            let var = lv.exp();
            g_mu.push(g + bn * m);
            g_lv.push(g * eps[i] * half * (half * lv).exp() + bn * half * (var - T::one()));
        }
        let Dims::Dense { n: b, f: d } = f.mu.dims else { unreachable!("dense heads") };
        let gh_mu = self.mu_head.backward(&f.mu_cache, &Tensor::dense(b, d, g_mu));
        let gh_lv = self.logvar_head.backward(&f.lv_cache, &Tensor::dense(b, d, g_lv));
        let gh = Tensor::new(gh_mu.dims, gh_mu.data.iter().zip(&gh_lv.data).map(|(a, c)| *a + *c).collect());
        self.encoder.backward(&f.enc, &gh);
        (terms, f)
    }

    pub(crate) fn absorb(&mut self, f: &Forward<T>) {
        self.encoder.absorb(&f.enc);
        self.decoder.absorb(&f.dec);
    }
}
