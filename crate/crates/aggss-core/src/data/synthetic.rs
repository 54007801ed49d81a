//! Procedural dataset for fast, dataset-free tests and smoke configs.
//!
//! Each class gets a fixed low-resolution random pattern upsampled to the
//! target size; samples are the class pattern plus per-pixel noise. The
//! patterns have no rotational symmetry, so rotation prediction carries
//! signal.

use super::{ImageDataset, ImageStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn build_synthetic(
    classes: usize,
    size: usize,
    train_per_class: usize,
    test_per_class: usize,
    seed: u64,
) -> ImageDataset {
    let channels = 3;
    let grid = 4.max(size / 4);
    let mut patterns = Vec::with_capacity(classes);
    for c in 0..classes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0xC1A5_5000 + c as u64));
        let coarse: Vec<f32> = (0..channels * grid * grid)
            .map(|_| rng.gen_range(0.15f32..0.85))
            .collect();
        patterns.push(upsample(&coarse, channels, grid, size));
    }

    let mut train = ImageStore::new(channels, size);
    let mut test = ImageStore::new(channels, size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5A3E_77);
    for (split, per_class) in [(&mut train, train_per_class), (&mut test, test_per_class)] {
        for c in 0..classes {
            for _ in 0..per_class {
                let img: Vec<u8> = patterns[c]
                    .iter()
                    .map(|&v| {
                        let noisy = v + gaussian(&mut rng) * 0.08;
                        (noisy.clamp(0.0, 1.0) * 255.0) as u8
                    })
                    .collect();
                split.push(&img, c as u16);
            }
        }
    }
    let class_names = (0..classes).map(|c| format!("synth_{c:02}")).collect();
    ImageDataset::from_stores("synthetic", train, test, class_names)
}

fn upsample(coarse: &[f32], channels: usize, grid: usize, size: usize) -> Vec<f32> {
    let mut out = vec![0f32; channels * size * size];
    for c in 0..channels {
        for i in 0..size {
            for j in 0..size {
                let gi = i * grid / size;
                let gj = j * grid / size;
                out[c * size * size + i * size + j] = coarse[(c * grid + gi) * grid + gj];
            }
        }
    }
    out
}

fn gaussian(rng: &mut ChaCha8Rng) -> f32 {
    // Box-Muller transform.
    let u1: f32 = rng.gen_range(1e-7f32..1.0);
    let u2: f32 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f32::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let a = build_synthetic(4, 16, 8, 2, 7);
        let b = build_synthetic(4, 16, 8, 2, 7);
        assert_eq!(a.train.len(), 32);
        assert_eq!(a.test.len(), 8);
        assert_eq!(a.num_classes(), 4);
        assert_eq!(a.train.pixels, b.train.pixels);
        let c = build_synthetic(4, 16, 8, 2, 8);
        assert_ne!(a.train.pixels, c.train.pixels);
    }

    #[test]
    fn classes_are_separable_by_mean_pattern() {
        let ds = build_synthetic(3, 16, 12, 4, 3);
        // Nearest-class-mean on raw pixels should beat chance comfortably.
        let k = ds.num_classes();
        let stride = 3 * 16 * 16;
        let mut means = vec![vec![0f64; stride]; k];
        let mut counts = vec![0usize; k];
        for i in 0..ds.train.len() {
            let y = ds.train.labels[i] as usize;
            counts[y] += 1;
            for (a, &b) in means[y].iter_mut().zip(ds.train.image_bytes(i)) {
                *a += b as f64;
            }
        }
        for (m, &n) in means.iter_mut().zip(&counts) {
            for v in m.iter_mut() {
                *v /= n as f64;
            }
        }
        let mut correct = 0;
        for i in 0..ds.test.len() {
            let img = ds.test.image_bytes(i);
            let pred = (0..k)
                .min_by(|&a, &b| {
                    let da: f64 = means[a]
                        .iter()
                        .zip(img)
                        .map(|(m, &p)| (m - p as f64).powi(2))
                        .sum();
                    let db: f64 = means[b]
                        .iter()
                        .zip(img)
                        .map(|(m, &p)| (m - p as f64).powi(2))
                        .sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if pred == ds.test.labels[i] as usize {
                correct += 1;
            }
        }
        assert!(correct as f64 / ds.test.len() as f64 > 0.9);
    }
}
