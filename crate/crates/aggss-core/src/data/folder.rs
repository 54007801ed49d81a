//! ImageNet-style folder layout: `root/{train,test|val}/<class>/<image>`.

use super::{ImageDataset, ImageStore};
use crate::error::{Error, Result};
use std::path::Path;

pub fn load_image_folder(root: impl AsRef<Path>, size: usize) -> Result<ImageDataset> {
    let root = root.as_ref();
    let train_dir = root.join("train");
    if !train_dir.is_dir() {
        return Err(Error::MissingPath(format!("{}", train_dir.display())));
    }
    let test_dir = ["test", "val"]
        .iter()
        .map(|d| root.join(d))
        .find(|p| p.is_dir())
        .ok_or_else(|| Error::MissingPath(format!("{}/(test|val)", root.display())))?;

    let class_names = sorted_dirs(&train_dir)?;
    if class_names.is_empty() {
        return Err(Error::Dataset(format!(
            "no class directories under {}",
            train_dir.display()
        )));
    }
    let train = read_split(&train_dir, &class_names, size)?;
    let test = read_split(&test_dir, &class_names, size)?;
    Ok(ImageDataset::from_stores(
        "image-folder",
        train,
        test,
        class_names,
    ))
}

fn sorted_dirs(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            names.push(entry.file_name().to_string_lossy().to_string());
        }
    }
    names.sort();
    Ok(names)
}

fn read_split(dir: &Path, class_names: &[String], size: usize) -> Result<ImageStore> {
    let mut store = ImageStore::new(3, size);
    for (label, class) in class_names.iter().enumerate() {
        let class_dir = dir.join(class);
        if !class_dir.is_dir() {
            continue;
        }
        let mut files: Vec<_> = std::fs::read_dir(&class_dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for path in files {
            let img = image::open(&path)
                .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?
                .into_rgb8();
            let img = image::imageops::resize(
                &img,
                size as u32,
                size as u32,
                image::imageops::FilterType::Triangle,
            );
            let mut chw = vec![0u8; 3 * size * size];
            for (x, y, pixel) in img.enumerate_pixels() {
                for c in 0..3 {
                    chw[c * size * size + y as usize * size + x as usize] = pixel[c];
                }
            }
            store.push(&chw, label as u16);
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_sorted_classes_from_folders() {
        let dir = tempfile::tempdir().unwrap();
        for split in ["train", "val"] {
            for class in ["zebra", "ant"] {
                let d = dir.path().join(split).join(class);
                std::fs::create_dir_all(&d).unwrap();
                let img = image::RgbImage::from_fn(8, 8, |x, y| {
                    image::Rgb([(x * 30) as u8, (y * 30) as u8, if class == "ant" { 0 } else { 200 }])
                });
                img.save(d.join("a.png")).unwrap();
            }
        }
        let ds = load_image_folder(dir.path(), 8).unwrap();
        assert_eq!(ds.class_names, vec!["ant".to_string(), "zebra".to_string()]);
        assert_eq!(ds.train.len(), 2);
        assert_eq!(ds.test.len(), 2);
        // Blue channel distinguishes the classes after CHW packing.
        assert_eq!(ds.train.image_bytes(0)[2 * 64], 0);
        assert_eq!(ds.train.image_bytes(1)[2 * 64], 200);
    }

    #[test]
    fn missing_train_dir_is_a_missing_path() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_image_folder(dir.path(), 8),
            Err(Error::MissingPath(_))
        ));
    }
}
