//! Linear softmax probe on frozen latent means and per-dimension predictiveness.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{mean_variance, rank_descending, LatentTable};
use crate::error::{Error, Result};
use crate::fsutil::write_json_atomic;
use crate::nn::{softmax_cross_entropy, Adam, Linear, Tensor};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Train on per-dimension z-scored latent means (training-split mean and
    /// standard deviation) so that `θ` magnitudes are comparable across
    /// dimensions of very different spread.
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { learning_rate: 0.001, batch_size: 32, patience: 10, max_epochs: 500, seed: 0, standardize: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeMetadata {
    /// Epochs actually run.
    pub epochs: usize,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Linear head `softmax(θᵀx + b)` with `θ` of shape `d×C`, where
/// `x_j = (μ_j − center_j) / scale_j` (identity unless the probe was trained
/// with standardization).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeHead<T> {
    /// Row-major `d×C`: `theta[j*C + c]` is the weight from dimension `j` to class `c`.
    pub theta: Vec<T>,
    pub bias: Vec<T>,
    pub center: Vec<T>,
    pub scale: Vec<T>,
    pub d: usize,
    pub n_classes: usize,
    pub metadata: ProbeMetadata,
}

#[derive(Serialize, Deserialize)]
struct HeadFile {
    theta: Vec<Vec<f64>>,
    bias: Vec<f64>,
    #[serde(default)]
    center: Vec<f64>,
    #[serde(default)]
    scale: Vec<f64>,
    metadata: ProbeMetadata,
}

impl<T: Scalar> ProbeHead<T> {
    pub fn new(theta: Vec<T>, bias: Vec<T>, d: usize, n_classes: usize) -> Result<Self> {
        if theta.len() != d * n_classes || bias.len() != n_classes {
            return Err(Error::contract(format!("probe head shape does not match d = {d}, C = {n_classes}")));
        }
        Ok(ProbeHead {
            theta,
            bias,
            center: vec![T::zero(); d],
            scale: vec![T::one(); d],
            d,
            n_classes,
            metadata: ProbeMetadata::default(),
        })
    }

    pub fn theta_row(&self, j: usize) -> &[T] {
        &self.theta[j * self.n_classes..(j + 1) * self.n_classes]
    }

    /// Probe input for one latent mean.
    pub fn input(&self, mu: &[T]) -> Vec<T> {
        (0..self.d).map(|j| (mu[j] - self.center[j]) / self.scale[j]).collect()
    }

    /// Class logits for one latent mean.
    pub fn logits(&self, mu: &[T]) -> Vec<T> {
        let x = self.input(mu);
        (0..self.n_classes)
            .map(|c| self.bias[c] + (0..self.d).map(|j| x[j] * self.theta[j * self.n_classes + c]).sum::<T>())
            .collect()
    }

    /// Argmax class; ties go to the lower class index.
    pub fn predict(&self, mu: &[T]) -> usize {
        let l = self.logits(mu);
        let mut best = 0;
        for c in 1..l.len() {
            if l[c] > l[best] {
                best = c;
            }
        }
        best
    }

    pub fn to_json(&self) -> serde_json::Value {
        let file = HeadFile {
            theta: (0..self.d).map(|j| self.theta_row(j).iter().map(|v| v.as_f64()).collect()).collect(),
            bias: self.bias.iter().map(|v| v.as_f64()).collect(),
            center: self.center.iter().map(|v| v.as_f64()).collect(),
            scale: self.scale.iter().map(|v| v.as_f64()).collect(),
            metadata: self.metadata.clone(),
        };
        serde_json::to_value(file).expect("head serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let f: HeadFile = serde_json::from_value(v.clone())?;
        let d = f.theta.len();
        let c = f.bias.len();
        if f.theta.iter().any(|r| r.len() != c) {
            return Err(Error::contract("probe head rows must all have one weight per class"));
        }
        let theta = f.theta.iter().flatten().map(|v| T::from_f64_lossy(*v)).collect();
        let mut head = Self::new(theta, f.bias.iter().map(|v| T::from_f64_lossy(*v)).collect(), d, c)?;
        if !f.center.is_empty() || !f.scale.is_empty() {
            if f.center.len() != d || f.scale.len() != d || f.scale.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::contract("probe center and scale need d entries with positive scales"));
            }
            head.center = f.center.iter().map(|v| T::from_f64_lossy(*v)).collect();
            head.scale = f.scale.iter().map(|v| T::from_f64_lossy(*v)).collect();
        }
        head.metadata = f.metadata;
        Ok(head)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json_atomic(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::NotFound(format!("{}: {e}", path.display())))?;
        Self::from_json(&serde_json::from_str(&text)?)
    }
}

fn head_from_linear<T: Scalar>(l: &Linear<T>) -> ProbeHead<T> {
    let (d, c) = (l.in_f, l.out_f);
    let mut theta = vec![T::zero(); d * c];
    for ci in 0..c {
        for j in 0..d {
            theta[j * c + ci] = l.weight.value[ci * d + j];
        }
    }
    let mut head = ProbeHead::new(theta, l.bias.value.clone(), d, c).expect("linear layer shape");
    head.metadata = ProbeMetadata::default();
    head
}

/// Per-dimension mean and population standard deviation; a constant
/// dimension keeps scale 1.
fn standardization<T: Scalar>(t: &LatentTable<T>) -> (Vec<T>, Vec<T>) {
    (0..t.dim())
        .map(|j| {
            let (mean, var) = mean_variance(&t.mu_column(j));
            let sd = var.sqrt();
            (mean, if sd > T::from_f64_lossy(1e-12) { sd } else { T::one() })
        })
        .unzip()
}

fn transformed<T: Scalar>(t: &LatentTable<T>, center: &[T], scale: &[T]) -> LatentTable<T> {
    let mut t = t.clone();
    let d = center.len();
    for (i, v) in t.mu.iter_mut().enumerate() {
        *v = (*v - center[i % d]) / scale[i % d];
    }
    t
}

fn batch_loss<T: Scalar>(l: &Linear<T>, t: &LatentTable<T>) -> (f64, f64) {
    if t.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let (logits, _) = l.forward(&Tensor::dense(t.len(), t.dim(), t.mu.clone()));
    let (loss, _) = softmax_cross_entropy(&logits, &t.labels);
    let head = head_from_linear(l);
    (loss.as_f64(), probe_accuracy(&head, t))
}

/// Train the probe with Adam and early stopping on validation cross-entropy.
/// With `cfg.standardize`, both splits are z-scored with the training split's
/// statistics, which the returned head keeps and applies in `logits`.
/// Consumes stored latent means; the encoder is never touched.
pub fn train_probe<T: Scalar>(train: &LatentTable<T>, val: &LatentTable<T>, cfg: &ProbeConfig) -> Result<ProbeHead<T>> {
    let n_classes = train.n_classes().max(val.n_classes());
    let mut present = vec![false; n_classes];
    train.labels.iter().for_each(|l| present[*l] = true);
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::contract("probe training data has fewer than 2 classes"));
    }
    if !val.is_empty() && val.dim() != train.dim() {
        return Err(Error::contract("train and val latents differ in dimension"));
    }
    if cfg.batch_size == 0 || cfg.patience == 0 || cfg.max_epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("probe batch_size, patience, max_epochs and learning_rate must be positive".into()));
    }
    let d = train.dim();
    let (center, scale) =
        if cfg.standardize { standardization(train) } else { (vec![T::zero(); d], vec![T::one(); d]) };
    let (train, val) = (&transformed(train, &center, &scale), &transformed(val, &center, &scale));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lin = Linear::<T>::new(d, n_classes, &mut rng);
    let mut adam = Adam::new(cfg.learning_rate);
    let monitor = if val.is_empty() { train } else { val };

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, usize, f64, Linear<T>)> = None;
    let mut epochs = 0;
    for epoch in 1..=cfg.max_epochs {
        epochs = epoch;
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let x: Vec<T> = chunk.iter().flat_map(|i| train.mu_row(*i).iter().copied()).collect();
            let y: Vec<usize> = chunk.iter().map(|i| train.labels[*i]).collect();
            let (logits, cache) = lin.forward(&Tensor::dense(chunk.len(), d, x));
            let (loss, g) = softmax_cross_entropy(&logits, &y);
            if !loss.is_finite() {
                return Err(Error::Training { epoch, message: "non-finite probe loss".into() });
            }
            lin.weight.zero_grad();
            lin.bias.zero_grad();
            lin.backward(&cache, &g);
            adam.step(&mut [&mut lin.weight, &mut lin.bias]);
        }
        let (loss, acc) = batch_loss(&lin, monitor);
        match &best {
            Some((b, be, _, _)) if loss >= *b => {
                if epoch - be >= cfg.patience {
                    break;
                }
            }
            _ => best = Some((loss, epoch, acc, lin.clone())),
        }
    }
    let (val_loss, best_epoch, val_accuracy, lin) = best.expect("at least one epoch");
    let mut head = head_from_linear(&lin);
    head.center = center;
    head.scale = scale;
    head.metadata = ProbeMetadata { epochs, best_epoch, val_loss, val_accuracy };
    Ok(head)
}

/// `Σ_c |θ_jc|` for 0-based dimension `j`, in the head's input units
/// (standard deviations of `μ_j` for a standardized probe); the bias is not included.
pub fn predictiveness<T: Scalar>(head: &ProbeHead<T>, j: usize) -> T {
    head.theta_row(j).iter().map(|v| v.abs()).sum()
}

pub fn predictiveness_all<T: Scalar>(head: &ProbeHead<T>) -> Vec<T> {
    (0..head.d).map(|j| predictiveness(head, j)).collect()
}

/// The `k` dimensions (0-based) with the largest predictiveness; ties by lower index.
pub fn rank_by_predictiveness<T: Scalar>(head: &ProbeHead<T>, k: usize) -> Result<Vec<usize>> {
    if k > head.d {
        return Err(Error::contract(format!("k = {k} exceeds d = {}", head.d)));
    }
    let p: Vec<f64> = predictiveness_all(head).iter().map(|v| v.as_f64()).collect();
    Ok(rank_descending(&p).into_iter().take(k).collect())
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn probe_accuracy<T: Scalar>(head: &ProbeHead<T>, latents: &LatentTable<T>) -> f64 {
    if latents.is_empty() {
        return 0.0;
    }
    let hits = (0..latents.len()).filter(|i| head.predict(latents.mu_row(*i)) == latents.labels[*i]).count();
    hits as f64 / latents.len() as f64
}
