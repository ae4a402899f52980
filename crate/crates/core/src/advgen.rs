//! Shortcut adversarial examples: turn a discovered zoom shortcut into test
//! inputs by cropping (close-up) or padding (distant shot), then measure how
//! much a conventionally trained classifier degrades on them.

use std::path::Path;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::Container;
use crate::data::LabeledImageSet;
use crate::error::{Error, Result};
use crate::fsutil::sha256_hex;
use crate::imageops::{crop, pad, resize_bilinear, PadFill};
use crate::nn::{softmax_cross_entropy, Adam, Conv2d, Layer, Linear, Mode, Sequential, Tensor};
use crate::scalar::Scalar;
use crate::vae::checkpoint::{blob, fill};

/// Smallest crop side, in pixels, that still carries recognisable content.
pub const MIN_CROP_PIXELS: usize = 8;
/// Filter counts of the reference classifier's convolution stack.
pub const REFERENCE_WIDTHS: [usize; 5] = [32, 64, 128, 256, 512];
pub const REFERENCE_SCHEMA_VERSION: u32 = 1;
const REFERENCE_KIND: [u8; 4] = *b"RCNN";

/// Border fill for the pad transform.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fill {
    #[default]
    EdgeReplicate,
    Constant([f32; 3]),
}

impl From<Fill> for PadFill {
    fn from(f: Fill) -> Self {
        match f {
            Fill::EdgeReplicate => PadFill::EdgeReplicate,
            Fill::Constant(rgb) => PadFill::Constant(rgb),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[default]
    Crop,
    Pad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Fraction of each side kept by the central crop.
    pub crop_factor: f64,
    /// Border width for the pad transform; `None` means a quarter of the image side.
    pub pad_pixels: Option<usize>,
    pub fill: Fill,
    /// Output side length; `None` keeps the input size.
    pub output_size: Option<usize>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            kind: AttackKind::Crop,
            crop_factor: 0.5,
            pad_pixels: None,
            fill: Fill::EdgeReplicate,
            output_size: None,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.crop_factor > 0.0 && self.crop_factor <= 1.0) {
            return Err(Error::Config(format!("crop_factor {} outside (0,1]", self.crop_factor)));
        }
        if self.output_size == Some(0) {
            return Err(Error::Config("output_size must be positive".into()));
        }
        if let Fill::Constant(rgb) = self.fill {
            if rgb.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config("fill components must lie in [0,1]".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, recorded in attack reports.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// Central crop keeping `crop_factor` of each side, resized to the output size.
pub fn crop_zoom_attack(x: &[f32], h: usize, w: usize, c: usize, cfg: &AttackConfig) -> Result<Vec<f32>> {
    cfg.validate()?;
    let ch = (cfg.crop_factor * h as f64).round() as usize;
    let cw = (cfg.crop_factor * w as f64).round() as usize;
    if ch.min(cw) < MIN_CROP_PIXELS {
        return Err(Error::contract(format!("crop of {ch}×{cw} pixels is below the {MIN_CROP_PIXELS}-pixel minimum")));
    }
    let window = crop(x, w, c, (h - ch) / 2, (w - cw) / 2, ch, cw);
    let (oh, ow) = cfg.output_size.map_or((h, w), |s| (s, s));
    Ok(resize_bilinear(&window, ch, cw, c, oh, ow))
}

/// Pad every side with the configured fill, resized to the output size.
pub fn pad_zoom_attack(x: &[f32], h: usize, w: usize, c: usize, cfg: &AttackConfig) -> Result<Vec<f32>> {
    cfg.validate()?;
    let p = cfg.pad_pixels.unwrap_or(h.min(w) / 4);
    let padded = pad(x, h, w, c, p, cfg.fill.into());
    let (oh, ow) = cfg.output_size.map_or((h, w), |s| (s, s));
    Ok(resize_bilinear(&padded, h + 2 * p, w + 2 * p, c, oh, ow))
}

/// Apply the configured transform to every image; labels and ids are kept.
pub fn attack_dataset(set: &LabeledImageSet, cfg: &AttackConfig) -> Result<LabeledImageSet> {
    let (h, w, c) = (set.height, set.width, set.channels);
    let out = cfg.output_size.map_or((h, w), |s| (s, s));
    let mut attacked = set.map_images(out, |x| match cfg.kind {
        AttackKind::Crop => crop_zoom_attack(x, h, w, c, cfg),
        AttackKind::Pad => pad_zoom_attack(x, h, w, c, cfg),
    })?;
    attacked.provenance = json!({ "attack": cfg, "source": set.provenance });
    Ok(attacked)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig { learning_rate: 0.001, batch_size: 32, patience: 10, max_epochs: 30, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

/// Plain image classifier: five 3×3 convolutions with ReLU and 2×2 max
/// pooling, then a dense softmax head.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceCnn<T> {
    image_size: usize,
    channels: usize,
    n_classes: usize,
    net: Sequential<T>,
    history: Vec<CnnEpoch>,
}

fn build_net<T: Scalar>(image_size: usize, channels: usize, n_classes: usize, seed: u64) -> Sequential<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut in_c = channels;
    for &w in &REFERENCE_WIDTHS {
        layers.push(Layer::Conv2d(Conv2d::new(in_c, w, 3, 1, 1, &mut rng)));
        layers.push(Layer::Relu);
        layers.push(Layer::MaxPool2);
        in_c = w;
    }
    let side = image_size >> REFERENCE_WIDTHS.len();
    layers.push(Layer::Flatten);
    layers.push(Layer::Linear(Linear::new(in_c * side * side, n_classes, &mut rng)));
    Sequential::new(layers)
}

fn batch_tensor<T: Scalar>(set: &LabeledImageSet, idx: &[usize]) -> Tensor<T> {
    let imgs: Vec<Vec<T>> =
        idx.iter().map(|i| set.image(*i).iter().map(|v| T::from_f64_lossy(*v as f64)).collect()).collect();
    let refs: Vec<&[T]> = imgs.iter().map(|v| v.as_slice()).collect();
    Tensor::from_hwc_batch(&refs, set.height, set.width, set.channels)
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> ReferenceCnn<T> {
    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn history(&self) -> &[CnnEpoch] {
        &self.history
    }

    fn check(&self, set: &LabeledImageSet) -> Result<()> {
        if set.height != self.image_size || set.width != self.image_size || set.channels != self.channels {
            return Err(Error::contract(format!(
                "images are {}×{}×{}, classifier expects {s}×{s}×{}",
                set.height,
                set.width,
                set.channels,
                self.channels,
                s = self.image_size
            )));
        }
        Ok(())
    }

    /// Predicted 0-based class per image.
    pub fn predict(&self, set: &LabeledImageSet) -> Result<Vec<usize>> {
        self.check(set)?;
        let idx: Vec<usize> = (0..set.len()).collect();
        let mut out = Vec::with_capacity(set.len());
        for chunk in idx.chunks(128) {
            let logits = self.net.infer(&batch_tensor(set, chunk));
            out.extend((0..chunk.len()).map(|i| argmax(logits.row(i))));
        }
        Ok(out)
    }

    /// Mean cross-entropy and accuracy over `set`.
    pub fn evaluate(&self, set: &LabeledImageSet) -> Result<(f64, f64)> {
        self.check(set)?;
        let idx: Vec<usize> = (0..set.len()).collect();
        let (mut loss, mut hits) = (0.0, 0usize);
        for chunk in idx.chunks(128) {
            let logits = self.net.infer(&batch_tensor(set, chunk));
            let labels: Vec<usize> = chunk.iter().map(|i| set.labels[*i]).collect();
            loss += softmax_cross_entropy(&logits, &labels).0.as_f64() * chunk.len() as f64;
            hits += (0..chunk.len()).filter(|i| argmax(logits.row(*i)) == labels[*i]).count();
        }
        let n = set.len().max(1) as f64;
        Ok((loss / n, hits as f64 / n))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = json!({
            "image_size": self.image_size,
            "channels": self.channels,
            "n_classes": self.n_classes,
            "history": self.history,
            "dtype": T::DTYPE,
        });
        let mut c = Container::new(REFERENCE_KIND, REFERENCE_SCHEMA_VERSION, meta);
        let mut net = self.net.clone();
        for (name, p) in net.params_mut() {
            c.insert(name, p.shape.clone(), blob(&p.value));
        }
        c.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::load(path, REFERENCE_KIND, REFERENCE_SCHEMA_VERSION)?;
        let field = |k: &str| {
            c.meta
                .get(k)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| Error::contract(format!("classifier file lacks `{k}`")))
        };
        let (image_size, channels, n_classes) = (field("image_size")?, field("channels")?, field("n_classes")?);
        let history = serde_json::from_value(c.meta.get("history").cloned().unwrap_or_else(|| json!([])))?;
        let mut net = build_net(image_size, channels, n_classes, 0);
        for (name, p) in net.params_mut() {
            fill(&c, &name, &mut p.value)?;
        }
        Ok(ReferenceCnn { image_size, channels, n_classes, net, history })
    }
}

/// Train the reference classifier with cross-entropy, Adam and early stopping
/// on validation loss; returns the best-validation parameters.
pub fn train_reference_cnn<T: Scalar>(
    train: &LabeledImageSet,
    val: &LabeledImageSet,
    cfg: &CnnConfig,
) -> Result<ReferenceCnn<T>> {
    let size = train.height;
    let depth = REFERENCE_WIDTHS.len();
    if train.width != size || size == 0 || !size.is_multiple_of(1 << depth) {
        return Err(Error::Config(format!(
            "reference classifier needs square images with side divisible by {}",
            1 << depth
        )));
    }
    if cfg.batch_size == 0 || cfg.patience == 0 || cfg.max_epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config(
            "classifier batch_size, patience, max_epochs and learning_rate must be positive".into(),
        ));
    }
    if train.is_empty() {
        return Err(Error::Config("classifier training split is empty".into()));
    }
    let n_classes = train.n_classes();
    let mut model = ReferenceCnn {
        image_size: size,
        channels: train.channels,
        n_classes,
        net: build_net(size, train.channels, n_classes, cfg.seed),
        history: Vec::new(),
    };
    if !val.is_empty() {
        model.check(val)?;
    }
    let monitor = if val.is_empty() { train } else { val };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut adam = Adam::<T>::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, ReferenceCnn<T>)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut sum, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let x = batch_tensor::<T>(train, chunk);
            let labels: Vec<usize> = chunk.iter().map(|i| train.labels[*i]).collect();
            let (logits, caches) = model.net.forward_cached(&x, Mode::Train);
            let (loss, g) = softmax_cross_entropy(&logits, &labels);
            if !loss.is_finite() {
                return Err(Error::Training { epoch, message: format!("non-finite classifier loss {loss}") });
            }
            model.net.zero_grad();
            model.net.backward(&caches, &g);
            let mut params: Vec<_> = model.net.params_mut().into_iter().map(|(_, p)| p).collect();
            adam.step(&mut params);
            sum += loss.as_f64() * chunk.len() as f64;
            seen += chunk.len();
        }
        let (val_loss, val_accuracy) = model.evaluate(monitor)?;
        if !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("non-finite classifier validation loss {val_loss}"),
            });
        }
        let record = CnnEpoch {
            epoch,
            train_loss: sum / seen as f64,
            val_loss,
            val_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        info!("classifier epoch {epoch}: train {:.4} val {val_loss:.4} acc {val_accuracy:.3}", record.train_loss);
        history.push(record);
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (_, mut model) = best.expect("at least one epoch");
    model.history = history;
    Ok(model)
}

/// Clean and attacked accuracy of one class (`class` is 1-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAttackResult {
    pub class: usize,
    pub name: String,
    pub n: usize,
    pub clean_accuracy: f64,
    pub adversarial_accuracy: f64,
    /// `adversarial_accuracy − clean_accuracy`; negative when the attack hurts.
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub config_hash: String,
    pub config: AttackConfig,
    pub clean_accuracy: f64,
    pub adversarial_accuracy: f64,
    /// Classes with at least one sample, in class order.
    pub per_class: Vec<ClassAttackResult>,
}

impl AttackReport {
    /// Result for 0-based class `c`, if it had samples.
    pub fn class(&self, c: usize) -> Option<&ClassAttackResult> {
        self.per_class.iter().find(|r| r.class == c + 1)
    }
}

/// Per-class accuracies from predictions on the clean and attacked copies.
pub fn accuracy_report(
    labels: &[usize],
    clean_pred: &[usize],
    adv_pred: &[usize],
    class_names: &[String],
    cfg: &AttackConfig,
) -> Result<AttackReport> {
    if clean_pred.len() != labels.len() || adv_pred.len() != labels.len() {
        return Err(Error::contract("prediction and label counts differ"));
    }
    let n_classes = class_names.len().max(labels.iter().map(|l| l + 1).max().unwrap_or(0));
    let mut n = vec![0usize; n_classes];
    let mut clean = vec![0usize; n_classes];
    let mut adv = vec![0usize; n_classes];
    for ((l, a), b) in labels.iter().zip(clean_pred).zip(adv_pred) {
        n[*l] += 1;
        clean[*l] += usize::from(a == l);
        adv[*l] += usize::from(b == l);
    }
    let per_class = (0..n_classes)
        .filter(|c| n[*c] > 0)
        .map(|c| {
            let ca = clean[c] as f64 / n[c] as f64;
            let aa = adv[c] as f64 / n[c] as f64;
            ClassAttackResult {
                class: c + 1,
                name: class_names.get(c).cloned().unwrap_or_else(|| format!("class_{}", c + 1)),
                n: n[c],
                clean_accuracy: ca,
                adversarial_accuracy: aa,
                delta: aa - ca,
            }
        })
        .collect();
    let total = labels.len().max(1) as f64;
    Ok(AttackReport {
        config_hash: cfg.hash(),
        config: cfg.clone(),
        clean_accuracy: clean.iter().sum::<usize>() as f64 / total,
        adversarial_accuracy: adv.iter().sum::<usize>() as f64 / total,
        per_class,
    })
}

/// Compare classifier accuracy on a clean set and its attacked copy.
pub fn evaluate_attack<T: Scalar>(
    model: &ReferenceCnn<T>,
    clean: &LabeledImageSet,
    attacked: &LabeledImageSet,
    cfg: &AttackConfig,
) -> Result<AttackReport> {
    if clean.labels != attacked.labels {
        return Err(Error::contract("attacked set labels differ from the clean set"));
    }
    let a = model.predict(clean)?;
    let b = model.predict(attacked)?;
    accuracy_report(&clean.labels, &a, &b, &clean.class_names, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{render_glyph, Shape};
    use crate::imageops::foreground_bbox_fraction;
    use proptest::prelude::*;

    fn glyph(size: usize, scale: f64) -> Vec<f32> {
        let c = size as f64 / 2.0;
        render_glyph(size, Shape::Square, scale, c, c, [1.0, 1.0, 1.0])
    }

    #[test]
    fn crop_geometry_and_minimum() {
        let x: Vec<f32> = (0..128 * 128 * 3).map(|i| (i % 251) as f32 / 251.0).collect();
        let cfg = AttackConfig::default();
        let out = crop_zoom_attack(&x, 128, 128, 3, &cfg).unwrap();
        assert_eq!(out.len(), 128 * 128 * 3);
        let direct = resize_bilinear(&crop(&x, 128, 3, 32, 32, 64, 64), 64, 64, 3, 128, 128);
        assert_eq!(out, direct);
        let tiny = AttackConfig { crop_factor: 0.2, ..cfg };
        assert!(matches!(crop_zoom_attack(&vec![0.0; 32 * 32 * 3], 32, 32, 3, &tiny), Err(Error::Contract(_))));
    }

    #[test]
    fn unit_crop_and_zero_pad_are_identities() {
        let x: Vec<f32> = (0..32 * 32 * 3).map(|i| (i % 17) as f32 / 17.0).collect();
        let full = AttackConfig { crop_factor: 1.0, ..Default::default() };
        let out = crop_zoom_attack(&x, 32, 32, 3, &full).unwrap();
        assert!(out.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1.0 / 255.0));
        let none = AttackConfig { kind: AttackKind::Pad, pad_pixels: Some(0), ..Default::default() };
        assert_eq!(pad_zoom_attack(&x, 32, 32, 3, &none).unwrap(), x);
    }

    #[test]
    fn crop_enlarges_the_foreground() {
        let x = glyph(64, 0.4);
        let before = foreground_bbox_fraction(&x, 64, 64, 3, 0.2);
        let cfg = AttackConfig::default();
        let after = foreground_bbox_fraction(&crop_zoom_attack(&x, 64, 64, 3, &cfg).unwrap(), 64, 64, 3, 0.2);
        assert!(after >= before / (cfg.crop_factor * cfg.crop_factor) * 0.8, "{before} -> {after}");
    }

    #[test]
    fn crop_keeps_a_centered_glyph_in_frame() {
        let x = glyph(64, 0.45);
        let lit = |img: &[f32]| img.chunks(3).filter(|p| p[0] > 0.5).count() as f64;
        let inside = lit(&crop(&x, 64, 3, 16, 16, 32, 32));
        assert!(inside / lit(&x) >= 0.99);
    }

    #[test]
    fn pad_shrinks_content_into_the_centre() {
        let x = vec![1.0f32; 128 * 128 * 3];
        let cfg = AttackConfig {
            kind: AttackKind::Pad,
            pad_pixels: Some(32),
            fill: Fill::Constant([0.0; 3]),
            ..Default::default()
        };
        let out = pad_zoom_attack(&x, 128, 128, 3, &cfg).unwrap();
        // Content spans 128 of 192 padded pixels: the central 2/3 of each side.
        let frac = foreground_bbox_fraction(&out, 128, 128, 3, 0.5);
        assert!((frac.sqrt() - 2.0 / 3.0).abs() < 0.02, "{frac}");
    }

    #[test]
    fn edge_replicate_copies_border_pixels() {
        let x: Vec<f32> = (0..4 * 4).map(|i| i as f32 / 16.0).collect();
        let p = pad(&x, 4, 4, 1, 2, Fill::EdgeReplicate.into());
        assert_eq!(&p[0..8], &[0.0, 0.0, 0.0, 1.0 / 16.0, 2.0 / 16.0, 3.0 / 16.0, 3.0 / 16.0, 3.0 / 16.0]);
    }

    #[test]
    fn fill_serializes_as_named_value_or_triple() {
        assert_eq!(serde_json::to_string(&Fill::EdgeReplicate).unwrap(), "\"edge-replicate\"");
        let c: Fill = serde_json::from_str("{\"constant\":[0.0,0.5,1.0]}").unwrap();
        assert_eq!(c, Fill::Constant([0.0, 0.5, 1.0]));
    }

    #[test]
    fn identical_sets_give_zero_deltas() {
        let labels = vec![0, 1, 1, 0, 2];
        let pred = vec![0, 1, 0, 1, 2];
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r = accuracy_report(&labels, &pred, &pred, &names, &AttackConfig::default()).unwrap();
        assert!(r.per_class.iter().all(|c| c.delta == 0.0));
        assert_eq!(r.class(2).unwrap().clean_accuracy, 1.0);
    }

    proptest! {
        #[test]
        fn accuracies_match_a_per_sample_loop(
            rows in prop::collection::vec((0usize..3, 0usize..3, 0usize..3), 1..60),
        ) {
            let labels: Vec<usize> = rows.iter().map(|r| r.0).collect();
            let a: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let b: Vec<usize> = rows.iter().map(|r| r.2).collect();
            let names: Vec<String> = vec!["x".into(), "y".into(), "z".into()];
            let r = accuracy_report(&labels, &a, &b, &names, &AttackConfig::default()).unwrap();
            for c in 0..3 {
                let mut n = 0;
                let mut hit_a = 0;
                let mut hit_b = 0;
                for i in 0..labels.len() {
                    if labels[i] == c {
                        n += 1;
                        if a[i] == c { hit_a += 1; }
                        if b[i] == c { hit_b += 1; }
                    }
                }
                match r.class(c) {
                    None => prop_assert_eq!(n, 0),
                    Some(res) => {
                        prop_assert_eq!(res.n, n);
                        prop_assert_eq!(res.clean_accuracy, hit_a as f64 / n as f64);
                        prop_assert_eq!(res.adversarial_accuracy, hit_b as f64 / n as f64);
                    }
                }
            }
        }

        #[test]
        fn transforms_are_pure(seed in 0u64..1000) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f32> = (0..32 * 32 * 3).map(|_| rng.random::<f32>()).collect();
            let cfg = AttackConfig::default();
            prop_assert_eq!(crop_zoom_attack(&x, 32, 32, 3, &cfg).unwrap(), crop_zoom_attack(&x, 32, 32, 3, &cfg).unwrap());
            let p = AttackConfig { kind: AttackKind::Pad, ..cfg };
            prop_assert_eq!(pad_zoom_attack(&x, 32, 32, 3, &p).unwrap(), pad_zoom_attack(&x, 32, 32, 3, &p).unwrap());
        }
    }

    #[test]
    fn reference_cnn_learns_and_round_trips() {
        let cfg = crate::data::SyntheticConfig::zoom(120, 32, 2, 1.0, 5);
        let set = crate::data::generate_zoom_shortcut(&cfg).unwrap();
        let train = set.subset(&(0..100).collect::<Vec<_>>());
        let val = set.subset(&(100..120).collect::<Vec<_>>());
        let cnn_cfg = CnnConfig { max_epochs: 1, ..Default::default() };
        let one = train_reference_cnn::<f32>(&train, &val, &cnn_cfg).unwrap();
        assert_eq!(one.history().len(), 1);
        let model = train_reference_cnn::<f32>(&train, &val, &CnnConfig { max_epochs: 15, ..cnn_cfg }).unwrap();
        assert!(model.evaluate(&val).unwrap().1 >= 0.9);
        assert_eq!(model.predict(&val).unwrap(), model.predict(&val).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cnn.bin");
        model.save(&p).unwrap();
        let back = ReferenceCnn::<f32>::load(&p).unwrap();
        assert_eq!(back.history().len(), model.history().len());
        assert_eq!(back.evaluate(&val).unwrap(), model.evaluate(&val).unwrap());
        let report = evaluate_attack(&model, &val, &val, &AttackConfig::default()).unwrap();
        assert!(report.per_class.iter().all(|c| c.delta == 0.0));
        let mut relabeled = val.clone();
        relabeled.labels[0] = 1 - relabeled.labels[0];
        assert!(evaluate_attack(&model, &val, &relabeled, &AttackConfig::default()).is_err());
    }
}
