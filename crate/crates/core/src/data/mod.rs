//! Labeled image datasets: synthetic shortcut generators, image-folder and IDX
//! ingestion, stratified splitting, and the on-disk archive format.
//!
//! Class labels are stored as 0-based class indices; files and reports show
//! them 1-based.

mod archive;
mod folder;
mod glyph;
pub mod idx;
mod split;
mod synthetic;

pub use archive::{load_archive, save_archive, ARCHIVE_SCHEMA_VERSION};
pub use folder::load_image_folder;
pub use glyph::{render_glyph, Shape};
pub use split::{split, Splits};
pub use synthetic::{
    colorize_digits, generate_colored_shortcut, generate_zoom_shortcut, SyntheticConfig, SyntheticKind,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `N` images of `h×w×c` pixels in `[0,1]` with class labels and stable IDs.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImageSet {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Row-major `N×h×w×c`.
    pub pixels: Vec<f32>,
    /// 0-based class index per sample.
    pub labels: Vec<usize>,
    pub ids: Vec<String>,
    pub class_names: Vec<String>,
    /// Where the injected shortcut attribute took its class-correlated value.
    pub shortcut_mask: Option<Vec<bool>>,
    /// Free-form provenance (generator config, source path).
    pub provenance: serde_json::Value,
}

/// Summary stored next to archived datasets and in run manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub n_samples: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub class_names: Vec<String>,
    pub class_counts: Vec<usize>,
    pub content_hash: String,
}

impl LabeledImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn image_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let len = self.image_len();
        &self.pixels[i * len..(i + 1) * len]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Check every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.pixels.len() != n * self.image_len() {
            return Err(Error::contract(format!(
                "pixel buffer has {} values, expected {} images of {}",
                self.pixels.len(),
                n,
                self.image_len()
            )));
        }
        if self.ids.len() != n {
            return Err(Error::contract("ids and labels differ in length"));
        }
        if let Some(m) = &self.shortcut_mask {
            if m.len() != n {
                return Err(Error::contract("shortcut mask and labels differ in length"));
            }
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l >= self.n_classes()) {
            return Err(Error::contract(format!("label {} outside 1..={}", bad + 1, self.n_classes())));
        }
        if let Some(p) = self.pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::contract(format!("pixel value {p} outside [0,1]")));
        }
        let mut seen = std::collections::HashSet::with_capacity(n);
        if let Some(dup) = self.ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::contract(format!("duplicate sample id `{dup}`")));
        }
        Ok(())
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> LabeledImageSet {
        let len = self.image_len();
        let mut pixels = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
        }
        LabeledImageSet {
            height: self.height,
            width: self.width,
            channels: self.channels,
            pixels,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            class_names: self.class_names.clone(),
            shortcut_mask: self.shortcut_mask.as_ref().map(|m| indices.iter().map(|&i| m[i]).collect()),
            provenance: self.provenance.clone(),
        }
    }

    /// Concatenate two sets with identical geometry and classes.
    pub fn concat(&self, other: &LabeledImageSet) -> Result<LabeledImageSet> {
        if (self.height, self.width, self.channels) != (other.height, other.width, other.channels)
            || self.class_names != other.class_names
        {
            return Err(Error::contract("cannot concatenate datasets with different geometry or classes"));
        }
        let mut out = self.clone();
        out.pixels.extend_from_slice(&other.pixels);
        out.labels.extend_from_slice(&other.labels);
        out.ids.extend(other.ids.iter().cloned());
        out.shortcut_mask = match (&self.shortcut_mask, &other.shortcut_mask) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(out)
    }

    /// Same samples with every image replaced by `f(image)`.
    pub fn map_images<F>(&self, out_size: (usize, usize), f: F) -> Result<LabeledImageSet>
    where
        F: Fn(&[f32]) -> Result<Vec<f32>>,
    {
        let mut pixels = Vec::with_capacity(self.len() * out_size.0 * out_size.1 * self.channels);
        for i in 0..self.len() {
            pixels.extend(f(self.image(i))?);
        }
        Ok(LabeledImageSet { height: out_size.0, width: out_size.1, pixels, ..self.clone() })
    }

    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::with_capacity(self.pixels.len() * 4 + self.labels.len() * 4);
        for p in &self.pixels {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        for l in &self.labels {
            bytes.extend_from_slice(&(*l as u32).to_le_bytes());
        }
        for id in &self.ids {
            bytes.extend_from_slice(id.as_bytes());
            bytes.push(0);
        }
        crate::fsutil::sha256_hex(&bytes)
    }

    pub fn info(&self) -> DatasetInfo {
        DatasetInfo {
            n_samples: self.len(),
            height: self.height,
            width: self.width,
            channels: self.channels,
            class_names: self.class_names.clone(),
            class_counts: self.class_counts(),
            content_hash: self.content_hash(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledImageSet {
        LabeledImageSet {
            height: 1,
            width: 1,
            channels: 1,
            pixels: vec![0.0, 0.5, 1.0],
            labels: vec![0, 1, 1],
            ids: vec!["a".into(), "b".into(), "c".into()],
            class_names: vec!["x".into(), "y".into()],
            shortcut_mask: None,
            provenance: serde_json::Value::Null,
        }
    }

    #[test]
    fn validation_catches_violations() {
        assert!(tiny().validate().is_ok());
        let mut d = tiny();
        d.pixels[0] = 1.5;
        assert!(d.validate().is_err());
        let mut d = tiny();
        d.ids[2] = "a".into();
        assert!(d.validate().is_err());
        let mut d = tiny();
        d.labels[0] = 2;
        assert!(d.validate().is_err());
    }

    #[test]
    fn subset_and_concat() {
        let d = tiny();
        let s = d.subset(&[2, 0]);
        assert_eq!(s.ids, vec!["c", "a"]);
        assert_eq!(s.pixels, vec![1.0, 0.0]);
        let c = s.concat(&d.subset(&[1])).unwrap();
        assert_eq!(c.labels, vec![1, 0, 1]);
        assert_eq!(d.class_counts(), vec![1, 2]);
    }
}
