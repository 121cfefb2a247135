//! Dataset directory discovery.
//!
//! ```text
//! <root>/images/<stem>.{png,jpg,jpeg}
//! <root>/masks/<LESION>/<stem>.png        (or <stem>_<LESION>.png)
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dataset::lesion::LesionClass;
use crate::dataset::manifest::SampleRecord;
use crate::error::{Error, IoContext, Result};

pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, Default)]
pub struct LoadedRecords {
    pub records: Vec<SampleRecord>,
    /// Images with no mask for the requested lesion.
    pub skipped: Vec<PathBuf>,
}

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Lists image files in `dir` keyed by stem, in lexicographic order.
pub fn list_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_path(dir)? {
        let path = entry.with_path(dir)?.path();
        if !path.is_file() || !has_image_extension(&path) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

pub fn images_dir(root: &Path) -> PathBuf {
    root.join("images")
}

pub fn masks_dir(root: &Path, lesion: LesionClass) -> PathBuf {
    root.join("masks").join(lesion.as_str())
}

/// Finds the mask of `stem` for `lesion`, if any.
pub fn find_mask(root: &Path, lesion: LesionClass, stem: &str) -> Option<PathBuf> {
    let dir = masks_dir(root, lesion);
    let suffixed = format!("{stem}_{lesion}");
    for name in [stem, suffixed.as_str()] {
        for ext in IMAGE_EXTENSIONS {
            let candidate = dir.join(format!("{name}.{ext}"));
            if candidate.is_file() {
                return Some(candidate);
            }
        }
    }
    None
}

/// Pairs every image under `root/images` with its `lesion` mask.
pub fn load_manifest(root: &Path, lesion: LesionClass) -> Result<LoadedRecords> {
    let images = images_dir(root);
    if !images.is_dir() {
        return Err(Error::io(
            &images,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset images directory not found"),
        ));
    }
    let mut loaded = LoadedRecords::default();
    for (stem, image_path) in list_images(&images)? {
        match find_mask(root, lesion, &stem) {
            Some(mask_path) => loaded
                .records
                .push(SampleRecord::original(stem, image_path, mask_path, lesion)),
            None => loaded.skipped.push(image_path),
        }
    }
    if loaded.records.is_empty() {
        log::warn!("no {lesion} image/mask pairs under {}", root.display());
    }
    if !loaded.skipped.is_empty() {
        log::info!("{} images have no {lesion} mask and were skipped", loaded.skipped.len());
    }
    Ok(loaded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(path: &Path) {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, b"").unwrap();
    }

    #[test]
    fn pairs_images_with_masks_and_reports_missing() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        for stem in ["c", "a", "b"] {
            touch(&root.join(format!("images/{stem}.jpg")));
        }
        touch(&root.join("masks/EX/a.png"));
        touch(&root.join("masks/EX/c_EX.png"));
        touch(&root.join("images/notes.txt"));
        let loaded = load_manifest(root, LesionClass::EX).unwrap();
        let ids: Vec<_> = loaded.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);
        assert_eq!(loaded.skipped, vec![root.join("images/b.jpg")]);
    }

    #[test]
    fn empty_directory_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("images")).unwrap();
        let loaded = load_manifest(dir.path(), LesionClass::SE).unwrap();
        assert!(loaded.records.is_empty());
        assert!(loaded.skipped.is_empty());
    }

    #[test]
    fn missing_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_manifest(&dir.path().join("nope"), LesionClass::HE), Err(Error::Io { .. })));
    }
}
