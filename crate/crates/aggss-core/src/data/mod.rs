//! Dataset loading and batch assembly.
//!
//! Images are held as raw u8 CHW planes and converted to normalized f32
//! tensors per batch. Loaders exist for the CIFAR-10/100 binary archives,
//! an image-folder layout, and a seeded synthetic dataset used by fast
//! tests and smoke configs.

mod cifar;
mod fetch;
mod folder;
mod synthetic;

pub use cifar::{load_cifar10, load_cifar100};
pub use fetch::{extract_tar_gz, fetch_archive, sha256_file, ArchiveSpec};
pub use folder::load_image_folder;
pub use synthetic::build_synthetic;

use crate::error::{Error, Result};
use ndarray::{Array3, Array4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-channel mean/std on the [0,1] pixel scale.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

/// A contiguous store of same-sized u8 CHW images.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStore {
    pub pixels: Vec<u8>,
    pub labels: Vec<u16>,
    pub channels: usize,
    pub size: usize,
}

impl ImageStore {
    pub fn new(channels: usize, size: usize) -> Self {
        Self {
            pixels: Vec::new(),
            labels: Vec::new(),
            channels,
            size,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn stride(&self) -> usize {
        self.channels * self.size * self.size
    }

    pub fn push(&mut self, image: &[u8], label: u16) {
        debug_assert_eq!(image.len(), self.stride());
        self.pixels.extend_from_slice(image);
        self.labels.push(label);
    }

    pub fn image_bytes(&self, index: usize) -> &[u8] {
        let s = self.stride();
        &self.pixels[index * s..(index + 1) * s]
    }

    /// Raw image scaled to [0,1], no normalization.
    pub fn image_f32(&self, index: usize) -> Array3<f32> {
        let bytes = self.image_bytes(index);
        Array3::from_shape_vec(
            (self.channels, self.size, self.size),
            bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        )
        .expect("image shape")
    }

    pub fn indices_by_class(&self, num_classes: usize) -> Vec<Vec<u32>> {
        let mut by_class = vec![Vec::new(); num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            by_class[y as usize].push(i as u32);
        }
        by_class
    }

    /// Keeps at most `per_class` samples per class, in store order.
    pub fn truncate_per_class(&mut self, num_classes: usize, per_class: usize) {
        let mut kept = ImageStore::new(self.channels, self.size);
        let mut counts = vec![0usize; num_classes];
        for i in 0..self.len() {
            let y = self.labels[i] as usize;
            if counts[y] < per_class {
                counts[y] += 1;
                kept.push(self.image_bytes(i), self.labels[i]);
            }
        }
        *self = kept;
    }
}

/// An in-memory labeled image dataset with train and test splits.
#[derive(Debug, Clone)]
pub struct ImageDataset {
    pub name: String,
    pub train: ImageStore,
    pub test: ImageStore,
    pub class_names: Vec<String>,
    normalization: Normalization,
}

impl ImageDataset {
    pub fn from_stores(
        name: impl Into<String>,
        train: ImageStore,
        test: ImageStore,
        class_names: Vec<String>,
    ) -> Self {
        let normalization = compute_normalization(&train);
        Self {
            name: name.into(),
            train,
            test,
            class_names,
            normalization,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn image_size(&self) -> usize {
        self.train.size
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }
}

/// Train-split channel statistics, accumulated in f64 for stability.
pub fn compute_normalization(store: &ImageStore) -> Normalization {
    let c = store.channels;
    let plane = store.size * store.size;
    let mut sum = vec![0f64; c];
    let mut sq = vec![0f64; c];
    let n = (store.len() * plane).max(1) as f64;
    for i in 0..store.len() {
        let img = store.image_bytes(i);
        for ci in 0..c {
            for &b in &img[ci * plane..(ci + 1) * plane] {
                let v = b as f64 / 255.0;
                sum[ci] += v;
                sq[ci] += v * v;
            }
        }
    }
    let mean: Vec<f32> = sum.iter().map(|&s| (s / n) as f32).collect();
    let std: Vec<f32> = sq
        .iter()
        .zip(&mean)
        .map(|(&s, &m)| (((s / n) - (m as f64) * (m as f64)).max(1e-8).sqrt()) as f32)
        .collect();
    Normalization { mean, std }
}

/// Standard training-time augmentation: zero-pad, random crop, random
/// horizontal flip.
#[derive(Debug, Clone, Copy)]
pub struct Augment {
    pub pad: usize,
    pub hflip: bool,
}

impl Default for Augment {
    fn default() -> Self {
        Self {
            pad: 4,
            hflip: true,
        }
    }
}

/// Assembles a normalized f32 batch from store indices.
///
/// Augmentation parameters are drawn from `rng` in index order, one sample
/// at a time, so a fixed seed reproduces the exact batch.
pub fn gather_batch(
    store: &ImageStore,
    norm: &Normalization,
    indices: &[u32],
    augment: Option<(&Augment, &mut ChaCha8Rng)>,
) -> Array4<f32> {
    let c = store.channels;
    let s = store.size;
    let mut out = Array4::<f32>::zeros((indices.len(), c, s, s));
    match augment {
        None => {
            for (row, &idx) in indices.iter().enumerate() {
                let img = store.image_bytes(idx as usize);
                normalize_into(img, c, s, norm, &mut out, row, 0, 0, false, 0);
            }
        }
        Some((aug, rng)) => {
            let pad = aug.pad;
            for (row, &idx) in indices.iter().enumerate() {
                let img = store.image_bytes(idx as usize);
                let (dy, dx) = if pad > 0 {
                    (rng.gen_range(0..=2 * pad), rng.gen_range(0..=2 * pad))
                } else {
                    (0, 0)
                };
                let flip = aug.hflip && rng.gen_bool(0.5);
                normalize_into(img, c, s, norm, &mut out, row, dy, dx, flip, pad);
            }
        }
    }
    out
}

/// Copies one u8 image into `out[row]`, applying crop offset (`dy`, `dx`)
/// within a zero-padded frame, optional horizontal flip, and normalization.
#[allow(clippy::too_many_arguments)]
fn normalize_into(
    img: &[u8],
    c: usize,
    s: usize,
    norm: &Normalization,
    out: &mut Array4<f32>,
    row: usize,
    dy: usize,
    dx: usize,
    flip: bool,
    pad: usize,
) {
    let plane = s * s;
    for ci in 0..c {
        let (mean, inv_std) = (norm.mean[ci], 1.0 / norm.std[ci]);
        let src = &img[ci * plane..(ci + 1) * plane];
        for i in 0..s {
            // Source row inside the padded frame.
            let si = (i + dy) as isize - pad as isize;
            for j in 0..s {
                let jj = if flip { s - 1 - j } else { j };
                let sj = (jj + dx) as isize - pad as isize;
                let v = if si >= 0 && si < s as isize && sj >= 0 && sj < s as isize {
                    src[si as usize * s + sj as usize] as f32 / 255.0
                } else {
                    0.0
                };
                out[[row, ci, i, j]] = (v - mean) * inv_std;
            }
        }
    }
}

/// Where a dataset comes from and how much of it to keep.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// One of `cifar10`, `cifar100`, `image-folder`, `synthetic`.
    pub kind: String,
    #[serde(default)]
    pub root: Option<String>,
    /// Cap on training samples per class (desk-scale runs).
    #[serde(default)]
    pub train_per_class: Option<usize>,
    #[serde(default)]
    pub test_per_class: Option<usize>,
    /// Synthetic-only knobs.
    #[serde(default)]
    pub classes: Option<usize>,
    #[serde(default)]
    pub image_size: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl DatasetSpec {
    pub fn load(&self) -> Result<ImageDataset> {
        let mut ds = match self.kind.as_str() {
            "cifar10" => load_cifar10(self.root_path()?)?,
            "cifar100" => load_cifar100(self.root_path()?)?,
            "image-folder" => {
                load_image_folder(self.root_path()?, self.image_size.unwrap_or(32))?
            }
            "synthetic" => build_synthetic(
                self.classes.unwrap_or(10),
                self.image_size.unwrap_or(16),
                self.train_per_class.unwrap_or(64),
                self.test_per_class.unwrap_or(16),
                self.seed.unwrap_or(0),
            ),
            other => {
                return Err(Error::Config(format!(
                    "unknown dataset kind `{other}` (known: cifar10, cifar100, image-folder, synthetic)"
                )))
            }
        };
        if self.kind != "synthetic" {
            let k = ds.num_classes();
            if let Some(n) = self.train_per_class {
                ds.train.truncate_per_class(k, n);
            }
            if let Some(n) = self.test_per_class {
                ds.test.truncate_per_class(k, n);
            }
            ds = ImageDataset::from_stores(ds.name, ds.train, ds.test, ds.class_names);
        }
        Ok(ds)
    }

    fn root_path(&self) -> Result<&str> {
        self.root.as_deref().ok_or_else(|| {
            Error::Config(format!("dataset kind `{}` requires a root path", self.kind))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny_store() -> ImageStore {
        let mut store = ImageStore::new(1, 2);
        store.push(&[0, 255, 0, 255], 0);
        store.push(&[255, 0, 255, 0], 1);
        store
    }

    #[test]
    fn normalization_statistics_are_exact() {
        let store = tiny_store();
        let norm = compute_normalization(&store);
        assert!((norm.mean[0] - 0.5).abs() < 1e-6);
        assert!((norm.std[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn gather_without_augment_is_pure_normalization() {
        let store = tiny_store();
        let norm = compute_normalization(&store);
        let batch = gather_batch(&store, &norm, &[0, 1], None);
        assert_eq!(batch.dim(), (2, 1, 2, 2));
        assert!((batch[[0, 0, 0, 0]] + 1.0).abs() < 1e-5);
        assert!((batch[[0, 0, 0, 1]] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn gather_with_fixed_seed_is_reproducible() {
        let store = tiny_store();
        let norm = compute_normalization(&store);
        let aug = Augment::default();
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let b1 = gather_batch(&store, &norm, &[0, 1, 0], Some((&aug, &mut r1)));
        let b2 = gather_batch(&store, &norm, &[0, 1, 0], Some((&aug, &mut r2)));
        assert_eq!(b1, b2);
    }

    #[test]
    fn truncate_per_class_keeps_store_order() {
        let mut store = ImageStore::new(1, 1);
        for i in 0..6u8 {
            store.push(&[i], (i % 2) as u16);
        }
        store.truncate_per_class(2, 2);
        assert_eq!(store.len(), 4);
        assert_eq!(store.labels, vec![0, 1, 0, 1]);
        assert_eq!(store.pixels, vec![0, 1, 2, 3]);
    }
}
