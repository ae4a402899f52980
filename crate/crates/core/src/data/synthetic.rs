//! Synthetic datasets with a planted shortcut attribute.
//!
//! Each sample gets a class label, then the shortcut attribute (glyph color or
//! zoom level) takes its class-correlated value with probability `p_corr` and a
//! uniformly drawn class's value otherwise. The random draw may land on the
//! sample's own class, so `shortcut_mask` records the realized match rather
//! than which branch was taken.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::glyph::{render_glyph, Shape};
use super::idx::IdxArray;
use super::LabeledImageSet;
use crate::error::{Error, Result};
use crate::imageops::resize_bilinear;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    Color,
    Zoom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub kind: SyntheticKind,
    pub n_samples: usize,
    pub image_size: usize,
    pub n_classes: usize,
    pub p_corr: f64,
    /// One RGB color per class (color variant).
    #[serde(default)]
    pub palette: Vec<[f32; 3]>,
    /// One bounding-box scale in `(0, 1]` per class (zoom variant).
    #[serde(default)]
    pub zoom_levels: Vec<f64>,
    /// Standard deviation of additive per-pixel Gaussian noise (sensor
    /// noise); `None` means the variant's default.
    #[serde(default)]
    pub noise_std: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

pub const DEFAULT_PALETTE: [[f32; 3]; 5] =
    [[1.0, 0.15, 0.15], [0.15, 0.9, 0.15], [0.2, 0.35, 1.0], [1.0, 0.9, 0.1], [0.1, 0.9, 0.95]];

/// Sensor noise of the zoom variant; it hides the low-contrast spots far more
/// than the glyph's overall size.
pub const DEFAULT_ZOOM_NOISE: f64 = 0.15;

impl SyntheticConfig {
    /// Color-shortcut config with the default palette (up to 5 classes).
    pub fn colored(n_samples: usize, image_size: usize, n_classes: usize, p_corr: f64, seed: u64) -> Self {
        SyntheticConfig {
            kind: SyntheticKind::Color,
            n_samples,
            image_size,
            n_classes,
            p_corr,
            palette: DEFAULT_PALETTE.iter().copied().cycle().take(n_classes).collect(),
            zoom_levels: Vec::new(),
            noise_std: None,
            seed,
        }
    }

    /// Zoom-shortcut config with levels evenly spaced from 0.9 down to 0.45
    /// and the default sensor noise.
    pub fn zoom(n_samples: usize, image_size: usize, n_classes: usize, p_corr: f64, seed: u64) -> Self {
        let zoom_levels = if n_classes == 1 {
            vec![0.9]
        } else {
            (0..n_classes).map(|c| 0.9 - 0.45 * c as f64 / (n_classes - 1) as f64).collect()
        };
        SyntheticConfig {
            kind: SyntheticKind::Zoom,
            n_samples,
            image_size,
            n_classes,
            p_corr,
            palette: Vec::new(),
            zoom_levels,
            noise_std: None,
            seed,
        }
    }

    /// Fill an empty palette or zoom-level list with the variant's defaults,
    /// so hand-written configs only need the kind, size and class count.
    pub fn with_defaults(mut self) -> Self {
        let d = match self.kind {
            SyntheticKind::Color => {
                Self::colored(self.n_samples, self.image_size, self.n_classes, self.p_corr, self.seed)
            }
            SyntheticKind::Zoom => Self::zoom(self.n_samples, self.image_size, self.n_classes, self.p_corr, self.seed),
        };
        if self.palette.is_empty() {
            self.palette = d.palette;
        }
        if self.zoom_levels.is_empty() {
            self.zoom_levels = d.zoom_levels;
        }
        self
    }

    /// Effective sensor-noise level.
    pub fn noise(&self) -> f64 {
        self.noise_std.unwrap_or(match self.kind {
            SyntheticKind::Color => 0.0,
            SyntheticKind::Zoom => DEFAULT_ZOOM_NOISE,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 1 {
            return Err(Error::config("n_classes must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.p_corr) {
            return Err(Error::config(format!("p_corr {} outside [0,1]", self.p_corr)));
        }
        if !(self.noise() >= 0.0 && self.noise().is_finite()) {
            return Err(Error::config(format!("noise_std {} must be a finite nonnegative number", self.noise())));
        }
        if self.image_size < 8 {
            return Err(Error::config("image_size must be at least 8"));
        }
        match self.kind {
            SyntheticKind::Color => {
                if self.palette.len() != self.n_classes {
                    return Err(Error::config(format!(
                        "palette has {} colors for {} classes",
                        self.palette.len(),
                        self.n_classes
                    )));
                }
                if self.palette.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::config("palette components must lie in [0,1]"));
                }
            }
            SyntheticKind::Zoom => {
                if self.zoom_levels.len() != self.n_classes {
                    return Err(Error::config(format!(
                        "{} zoom levels for {} classes",
                        self.zoom_levels.len(),
                        self.n_classes
                    )));
                }
                if let Some(z) = self.zoom_levels.iter().find(|z| !(**z > 0.0 && **z <= 1.0)) {
                    return Err(Error::config(format!("zoom level {z} outside (0,1]")));
                }
            }
        }
        Ok(())
    }
}

/// Class label, attribute class and whether they match.
fn draw_assignment(rng: &mut ChaCha8Rng, n_classes: usize, p_corr: f64) -> (usize, usize, bool) {
    let label = rng.random_range(0..n_classes);
    let attr = if rng.random_bool(p_corr) { label } else { rng.random_range(0..n_classes) };
    (label, attr, attr == label)
}

/// Zoom-variant glyph for class `c` of `n`: a disc with `n − 1 − c` dimmed
/// spots, so the last (most distant) class is a plain disc and classes differ
/// only in a small surface detail.
fn zoom_shape(c: usize, n: usize) -> Shape {
    match n - 1 - c {
        0 => Shape::Circle,
        spots => Shape::Spotted(spots.min(u8::MAX as usize) as u8),
    }
}

fn add_noise(img: &mut [f32], std: f64, rng: &mut ChaCha8Rng) {
    if std > 0.0 {
        for p in img.iter_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *p = (*p as f64 + std * e).clamp(0.0, 1.0) as f32;
        }
    }
}

fn class_names(config: &SyntheticConfig) -> Vec<String> {
    let n = config.n_classes;
    (0..n)
        .map(|c| match config.kind {
            SyntheticKind::Color => Shape::for_class(c).name(),
            SyntheticKind::Zoom => zoom_shape(c, n).name(),
        })
        .collect()
}

fn assemble(config: &SyntheticConfig, prefix: &str, samples: Vec<(Vec<f32>, usize, bool)>) -> LabeledImageSet {
    let n = samples.len();
    let mut pixels = Vec::with_capacity(n * config.image_size * config.image_size * 3);
    let mut labels = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for (img, l, m) in samples {
        pixels.extend(img);
        labels.push(l);
        mask.push(m);
    }
    LabeledImageSet {
        height: config.image_size,
        width: config.image_size,
        channels: 3,
        pixels,
        labels,
        ids: (0..n).map(|i| format!("{prefix}-{i:06}")).collect(),
        class_names: class_names(config),
        shortcut_mask: Some(mask),
        provenance: serde_json::json!({ "generator": config }),
    }
}

/// Glyph per class, colored by the (possibly shortcut-correlated) palette entry.
///
/// Nuisance factors: glyph scale in `[0.55, 0.75]` of the image side and a
/// centre jitter of up to 6% of the side in each direction.
pub fn generate_colored_shortcut(config: &SyntheticConfig) -> Result<LabeledImageSet> {
    if config.kind != SyntheticKind::Color {
        return Err(Error::config("generate_colored_shortcut needs a color-variant config"));
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let size = config.image_size as f64;
    let samples = (0..config.n_samples)
        .map(|_| {
            let (label, attr, hit) = draw_assignment(&mut rng, config.n_classes, config.p_corr);
            let scale = rng.random_range(0.55..=0.75);
            let jitter = 0.06 * size;
            let cx = size / 2.0 + rng.random_range(-jitter..=jitter);
            let cy = size / 2.0 + rng.random_range(-jitter..=jitter);
            let mut img = render_glyph(config.image_size, Shape::for_class(label), scale, cx, cy, config.palette[attr]);
            add_noise(&mut img, config.noise(), &mut rng);
            (img, label, hit)
        })
        .collect();
    Ok(assemble(config, "color", samples))
}

/// Centered disc per class (plain, or with a few dimmed spots) rendered
/// at the (possibly shortcut-correlated) zoom level. Brightness varies in
/// `[0.75, 1.0]` as a nuisance factor and sensor noise is added on top.
pub fn generate_zoom_shortcut(config: &SyntheticConfig) -> Result<LabeledImageSet> {
    if config.kind != SyntheticKind::Zoom {
        return Err(Error::config("generate_zoom_shortcut needs a zoom-variant config"));
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let center = config.image_size as f64 / 2.0;
    let samples = (0..config.n_samples)
        .map(|_| {
            let (label, attr, hit) = draw_assignment(&mut rng, config.n_classes, config.p_corr);
            let brightness = rng.random_range(0.75f32..=1.0);
            let color = [brightness, 0.85 * brightness, 0.2 * brightness];
            let mut img = render_glyph(
                config.image_size,
                zoom_shape(label, config.n_classes),
                config.zoom_levels[attr],
                center,
                center,
                color,
            );
            add_noise(&mut img, config.noise(), &mut rng);
            (img, label, hit)
        })
        .collect();
    Ok(assemble(config, "zoom", samples))
}

/// Colored-digit recipe on real grayscale digits (e.g. parsed MNIST IDX files).
///
/// Digits are grouped into `config.n_classes` contiguous groups
/// (`group = digit·C/10`); each digit is tinted with its group's palette color
/// with probability `p_corr`, else with a uniformly random palette color, and
/// resized to `config.image_size`.
pub fn colorize_digits(images: &IdxArray, labels: &IdxArray, config: &SyntheticConfig) -> Result<LabeledImageSet> {
    if config.kind != SyntheticKind::Color {
        return Err(Error::config("colorize_digits needs a color-variant config"));
    }
    config.validate()?;
    let [n, h, w] = images.shape[..] else {
        return Err(Error::contract(format!("expected a rank-3 image array, got shape {:?}", images.shape)));
    };
    let gray = images.data.to_u8().ok_or_else(|| Error::contract("digit images must be u8"))?;
    let digits = labels.data.to_u8().ok_or_else(|| Error::contract("digit labels must be u8"))?;
    if digits.len() != n {
        return Err(Error::contract(format!("{} labels for {n} images", digits.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let c = config.n_classes;
    let samples = (0..n)
        .map(|i| {
            let label = (digits[i] as usize).min(9) * c / 10;
            let attr = if rng.random_bool(config.p_corr) { label } else { rng.random_range(0..c) };
            let color = config.palette[attr];
            let plane = &gray[i * h * w..(i + 1) * h * w];
            let mut rgb = Vec::with_capacity(h * w * 3);
            for &g in plane {
                let v = g as f32 / 255.0;
                rgb.extend(color.iter().map(|ch| ch * v));
            }
            let img = resize_bilinear(&rgb, h, w, 3, config.image_size, config.image_size);
            (img, label, attr == label)
        })
        .collect::<Vec<_>>();
    let mut set = assemble(config, "digit", samples);
    set.class_names = (0..c)
        .map(|g| {
            let lo = (g * 10).div_ceil(c);
            let hi = ((g + 1) * 10).div_ceil(c) - 1;
            format!("digits {lo}-{hi}")
        })
        .collect();
    Ok(set)
}
