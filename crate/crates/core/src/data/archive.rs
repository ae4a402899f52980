use std::path::Path;

use serde_json::json;

use super::LabeledImageSet;
use crate::container::{Blob, Container};
use crate::error::{Error, Result};

pub const ARCHIVE_SCHEMA_VERSION: u32 = 1;
const KIND: [u8; 4] = *b"DSET";

/// Write a dataset as a single archive: pixels, labels, shortcut mask and a
/// JSON manifest (geometry, class names, ids, provenance, schema version).
pub fn save_archive(set: &LabeledImageSet, path: &Path) -> Result<()> {
    set.validate()?;
    let manifest = json!({
        "schema_version": ARCHIVE_SCHEMA_VERSION,
        "height": set.height,
        "width": set.width,
        "channels": set.channels,
        "class_names": set.class_names,
        "ids": set.ids,
        "provenance": set.provenance,
        "content_hash": set.content_hash(),
    });
    let mut c = Container::new(KIND, ARCHIVE_SCHEMA_VERSION, manifest);
    let n = set.len();
    c.insert("pixels", vec![n, set.height, set.width, set.channels], Blob::F32(set.pixels.clone()));
    c.insert("labels", vec![n], Blob::U32(set.labels.iter().map(|l| *l as u32).collect()));
    if let Some(m) = &set.shortcut_mask {
        c.insert("shortcut_mask", vec![n], Blob::U8(m.iter().map(|b| *b as u8).collect()));
    }
    c.save(path)
}

pub fn load_archive(path: &Path) -> Result<LabeledImageSet> {
    let c = Container::load(path, KIND, ARCHIVE_SCHEMA_VERSION)?;
    let meta = &c.meta;
    let field = |k: &str| meta.get(k).ok_or_else(|| Error::contract(format!("archive manifest lacks `{k}`")));
    let dim = |k: &str| -> Result<usize> {
        field(k)?.as_u64().map(|v| v as usize).ok_or_else(|| Error::contract(format!("`{k}` is not an integer")))
    };
    let Blob::F32(pixels) = &c.get("pixels")?.blob else {
        return Err(Error::contract("archive pixels must be f32"));
    };
    let Blob::U32(labels) = &c.get("labels")?.blob else {
        return Err(Error::contract("archive labels must be u32"));
    };
    let shortcut_mask = match c.tensors.get("shortcut_mask") {
        Some(e) => match &e.blob {
            Blob::U8(v) => Some(v.iter().map(|b| *b != 0).collect()),
            _ => return Err(Error::contract("archive shortcut mask must be u8")),
        },
        None => None,
    };
    let set = LabeledImageSet {
        height: dim("height")?,
        width: dim("width")?,
        channels: dim("channels")?,
        pixels: pixels.clone(),
        labels: labels.iter().map(|l| *l as usize).collect(),
        ids: serde_json::from_value(field("ids")?.clone())?,
        class_names: serde_json::from_value(field("class_names")?.clone())?,
        shortcut_mask,
        provenance: meta.get("provenance").cloned().unwrap_or_default(),
    };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_colored_shortcut, SyntheticConfig};

    #[test]
    fn archive_round_trip() {
        let set = generate_colored_shortcut(&SyntheticConfig::colored(12, 8, 3, 0.9, 5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("set.lsd");
        save_archive(&set, &p).unwrap();
        assert_eq!(load_archive(&p).unwrap(), set);
    }
}
