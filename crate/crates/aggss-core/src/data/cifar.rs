//! Readers for the CIFAR-10 and CIFAR-100 binary archive layouts.

use super::{ImageDataset, ImageStore};
use crate::error::{Error, Result};
use std::path::Path;

const IMAGE_BYTES: usize = 3 * 32 * 32;

const CIFAR10_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// Loads `cifar-10-batches-bin` (or a directory directly containing the
/// batch files): records of 1 label byte + 3072 pixel bytes.
pub fn load_cifar10(root: impl AsRef<Path>) -> Result<ImageDataset> {
    let dir = locate(root.as_ref(), "cifar-10-batches-bin", "data_batch_1.bin")?;
    let mut train = ImageStore::new(3, 32);
    for b in 1..=5 {
        read_records(&dir.join(format!("data_batch_{b}.bin")), 1, 0, &mut train)?;
    }
    let mut test = ImageStore::new(3, 32);
    read_records(&dir.join("test_batch.bin"), 1, 0, &mut test)?;
    let class_names = read_names(&dir.join("batches.meta.txt"))
        .unwrap_or_else(|| CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect());
    Ok(ImageDataset::from_stores("cifar10", train, test, class_names))
}

/// Loads `cifar-100-binary`: records of 1 coarse + 1 fine label byte +
/// 3072 pixel bytes; fine labels are used.
pub fn load_cifar100(root: impl AsRef<Path>) -> Result<ImageDataset> {
    let dir = locate(root.as_ref(), "cifar-100-binary", "train.bin")?;
    let mut train = ImageStore::new(3, 32);
    read_records(&dir.join("train.bin"), 2, 1, &mut train)?;
    let mut test = ImageStore::new(3, 32);
    read_records(&dir.join("test.bin"), 2, 1, &mut test)?;
    let class_names = read_names(&dir.join("fine_label_names.txt"))
        .unwrap_or_else(|| (0..100).map(|i| format!("class_{i:02}")).collect());
    if class_names.len() != 100 {
        return Err(Error::Dataset(format!(
            "expected 100 fine label names, found {}",
            class_names.len()
        )));
    }
    Ok(ImageDataset::from_stores("cifar100", train, test, class_names))
}

/// Accepts either the dataset directory itself or a parent containing it.
fn locate(root: &Path, subdir: &str, probe: &str) -> Result<std::path::PathBuf> {
    if root.join(probe).is_file() {
        return Ok(root.to_path_buf());
    }
    let nested = root.join(subdir);
    if nested.join(probe).is_file() {
        return Ok(nested);
    }
    Err(Error::MissingPath(format!(
        "{} (no {probe} under it or under {subdir}/)",
        root.display()
    )))
}

fn read_records(
    path: &Path,
    label_bytes: usize,
    label_offset: usize,
    store: &mut ImageStore,
) -> Result<()> {
    let data = std::fs::read(path).map_err(|_| Error::MissingPath(path.display().to_string()))?;
    let record = label_bytes + IMAGE_BYTES;
    if data.len() % record != 0 {
        return Err(Error::Dataset(format!(
            "{}: size {} is not a multiple of record length {record}",
            path.display(),
            data.len()
        )));
    }
    for chunk in data.chunks_exact(record) {
        let label = chunk[label_offset] as u16;
        store.push(&chunk[label_bytes..], label);
    }
    Ok(())
}

fn read_names(path: &Path) -> Option<Vec<String>> {
    let text = std::fs::read_to_string(path).ok()?;
    let names: Vec<String> = text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    (!names.is_empty()).then_some(names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_missing_root_with_path_in_error() {
        let err = load_cifar10("/nonexistent/path").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("/nonexistent/path"), "{msg}");
    }

    #[test]
    fn parses_synthetic_batch_file() {
        let dir = tempfile::tempdir().unwrap();
        // Two records: label + 3072 bytes each.
        let mut blob = Vec::new();
        for label in [3u8, 7u8] {
            blob.push(label);
            blob.extend(std::iter::repeat(label * 10).take(IMAGE_BYTES));
        }
        for name in [
            "data_batch_1.bin",
            "data_batch_2.bin",
            "data_batch_3.bin",
            "data_batch_4.bin",
            "data_batch_5.bin",
            "test_batch.bin",
        ] {
            std::fs::write(dir.path().join(name), &blob).unwrap();
        }
        let ds = load_cifar10(dir.path()).unwrap();
        assert_eq!(ds.train.len(), 10);
        assert_eq!(ds.test.len(), 2);
        assert_eq!(ds.train.labels[0], 3);
        assert_eq!(ds.train.image_bytes(1)[0], 70);
        assert_eq!(ds.num_classes(), 10);
    }
}
