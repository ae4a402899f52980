use std::fs;
use std::path::Path;

use log::warn;

use super::LabeledImageSet;
use crate::error::{Error, Result};
use crate::imageops::resize_bilinear;

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Load a class-per-subdirectory image folder.
///
/// Classes are indexed by sorted subdirectory name. Images are converted to
/// RGB, resized to `image_size×image_size` (bilinear) and scaled to `[0,1]`;
/// no augmentation. Unreadable files are skipped with a warning.
pub fn load_image_folder(path: &Path, image_size: usize) -> Result<LabeledImageSet> {
    let ingest = |p: &Path, message: String| Error::Ingestion { path: p.to_path_buf(), message };
    if image_size == 0 {
        return Err(Error::config("image_size must be positive"));
    }
    let mut classes: Vec<(String, std::path::PathBuf)> = fs::read_dir(path)
        .map_err(|e| ingest(path, e.to_string()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_dir()).unwrap_or(false))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    classes.sort();
    if classes.is_empty() {
        return Err(ingest(path, "no class subdirectories".into()));
    }

    let mut set = LabeledImageSet {
        height: image_size,
        width: image_size,
        channels: 3,
        pixels: Vec::new(),
        labels: Vec::new(),
        ids: Vec::new(),
        class_names: classes.iter().map(|(n, _)| n.clone()).collect(),
        shortcut_mask: None,
        provenance: serde_json::json!({ "image_folder": path.display().to_string(), "image_size": image_size }),
    };
    for (class_idx, (name, dir)) in classes.iter().enumerate() {
        let mut files: Vec<_> = fs::read_dir(dir)
            .map_err(|e| ingest(dir, e.to_string()))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .collect();
        files.sort();
        let mut loaded = 0usize;
        for file in &files {
            let img = match image::open(file) {
                Ok(img) => img.to_rgb8(),
                Err(e) => {
                    warn!("skipping unreadable image {}: {e}", file.display());
                    continue;
                }
            };
            let (w, h) = (img.width() as usize, img.height() as usize);
            let raw: Vec<f32> = img.as_raw().iter().map(|v| *v as f32 / 255.0).collect();
            set.pixels.extend(resize_bilinear(&raw, h, w, 3, image_size, image_size));
            set.labels.push(class_idx);
            let file_name = file.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            set.ids.push(format!("{name}/{file_name}"));
            loaded += 1;
        }
        if loaded == 0 {
            return Err(ingest(dir, format!("class `{name}` has no readable images")));
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn write_png(path: &Path, size: u32, v: u8) {
        RgbImage::from_pixel(size, size, Rgb([v, v / 2, 0])).save(path).unwrap();
    }

    #[test]
    fn loads_classes_in_sorted_order() {
        let dir = tempfile::tempdir().unwrap();
        for (class, n) in [("b", 2), ("a", 3)] {
            fs::create_dir(dir.path().join(class)).unwrap();
            for i in 0..n {
                write_png(&dir.path().join(class).join(format!("{i}.png")), 64, 200);
            }
        }
        let set = load_image_folder(dir.path(), 128).unwrap();
        set.validate().unwrap();
        assert_eq!(set.len(), 5);
        assert_eq!(set.class_names, vec!["a", "b"]);
        assert_eq!(set.class_counts(), vec![3, 2]);
        assert_eq!((set.height, set.width, set.channels), (128, 128, 3));
        assert_eq!(set.image(0).len(), 128 * 128 * 3);
        assert!((set.image(0)[0] - 200.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn empty_class_is_an_error_naming_the_directory() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("full")).unwrap();
        write_png(&dir.path().join("full/x.png"), 8, 10);
        fs::create_dir(dir.path().join("hollow")).unwrap();
        match load_image_folder(dir.path(), 8) {
            Err(Error::Ingestion { path, .. }) => assert!(path.ends_with("hollow")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unreadable_files_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("c")).unwrap();
        write_png(&dir.path().join("c/good.png"), 8, 10);
        fs::write(dir.path().join("c/bad.png"), b"not an image").unwrap();
        let set = load_image_folder(dir.path(), 8).unwrap();
        assert_eq!(set.ids, vec!["c/good.png"]);

        fs::remove_file(dir.path().join("c/good.png")).unwrap();
        assert!(matches!(load_image_folder(dir.path(), 8), Err(Error::Ingestion { .. })));
    }
}
