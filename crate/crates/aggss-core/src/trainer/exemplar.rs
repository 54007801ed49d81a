//! Bounded exemplar storage with herding or random selection.

use super::config::SelectionPolicy;
use crate::data::{gather_batch, ImageDataset, Normalization};
use crate::error::{Error, Result};
use crate::model::IncrementalModel;
use crate::scenario::TaskDataset;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Stores up to `budget` train-store indices, keyed by stream label.
///
/// Every class holds at most `budget / classes_seen` samples; quotas are
/// re-balanced after each task by truncating existing per-class lists, which
/// keeps the herding prefix property intact.
#[derive(Debug, Clone)]
pub struct ExemplarBuffer {
    budget: usize,
    policy: SelectionPolicy,
    seed: u64,
    store: BTreeMap<u16, Vec<u32>>,
}

impl ExemplarBuffer {
    pub fn new(budget: usize, policy: SelectionPolicy, seed: u64) -> Self {
        Self {
            budget,
            policy,
            seed,
            store: BTreeMap::new(),
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.store.values().map(|v| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn classes(&self) -> Vec<u16> {
        self.store.keys().copied().collect()
    }

    /// All stored `(train index, stream label)` pairs in label order.
    pub fn samples(&self) -> Vec<(u32, u16)> {
        let mut out = Vec::with_capacity(self.len());
        for (&label, indices) in &self.store {
            out.extend(indices.iter().map(|&i| (i, label)));
        }
        out
    }

    /// Re-allocates quotas over all seen classes and selects exemplars for
    /// the newly finished task.
    pub fn update(
        &mut self,
        task: &TaskDataset,
        ds: &ImageDataset,
        model: &mut IncrementalModel,
    ) -> Result<()> {
        let new_labels: Vec<u16> = {
            let mut labels: Vec<u16> = task.labeled.iter().map(|&(_, l)| l).collect();
            labels.sort_unstable();
            labels.dedup();
            labels
        };
        let classes_seen = self.store.len() + new_labels.len();
        if classes_seen == 0 {
            return Ok(());
        }
        let quota = self.budget / classes_seen;
        if quota == 0 {
            return Err(Error::Config(format!(
                "exemplar budget {} cannot cover {classes_seen} classes",
                self.budget
            )));
        }
        for indices in self.store.values_mut() {
            indices.truncate(quota);
        }
        for &label in &new_labels {
            let candidates: Vec<u32> = task
                .labeled
                .iter()
                .filter(|&&(_, l)| l == label)
                .map(|&(i, _)| i)
                .collect();
            let selected = match self.policy {
                SelectionPolicy::Random => {
                    let mut picks = candidates.clone();
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(self.seed ^ (0xE4E3 + label as u64 * 7919));
                    picks.shuffle(&mut rng);
                    picks.truncate(quota);
                    picks
                }
                SelectionPolicy::Herding => {
                    let features = extract_features(ds, model, &candidates)?;
                    herding_order(&features, quota.min(candidates.len()))
                        .into_iter()
                        .map(|i| candidates[i])
                        .collect()
                }
            };
            self.store.insert(label, selected);
        }
        debug_assert!(self.len() <= self.budget);
        Ok(())
    }
}

/// Backbone features on unrotated, unaugmented images.
fn extract_features(
    ds: &ImageDataset,
    model: &mut IncrementalModel,
    indices: &[u32],
) -> Result<Array2<f32>> {
    let norm: &Normalization = ds.normalization();
    let d = model.feature_dim();
    let mut features = Array2::<f32>::zeros((indices.len(), d));
    let chunk = 256;
    for (ci, block) in indices.chunks(chunk).enumerate() {
        let batch = gather_batch(&ds.train, norm, block, None);
        let f = model.forward_features(&batch, false);
        features
            .slice_mut(ndarray::s![ci * chunk..ci * chunk + block.len(), ..])
            .assign(&f);
    }
    model.drop_caches();
    Ok(features)
}

/// Greedy herding: repeatedly picks the candidate whose inclusion brings the
/// selected-set mean closest to the class mean. Returns selection order as
/// row indices into `features`.
pub fn herding_order(features: &Array2<f32>, take: usize) -> Vec<usize> {
    let n = features.nrows();
    let d = features.ncols();
    let take = take.min(n);
    let mut mean = vec![0f64; d];
    for row in features.outer_iter() {
        for (m, &v) in mean.iter_mut().zip(row.iter()) {
            *m += v as f64;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut selected = Vec::with_capacity(take);
    let mut sum = vec![0f64; d];
    let mut used = vec![false; n];
    for step in 1..=take {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if used[i] {
                continue;
            }
            let mut dist = 0f64;
            let row = features.row(i);
            for j in 0..d {
                let avg = (sum[j] + row[j] as f64) / step as f64;
                let diff = mean[j] - avg;
                dist += diff * diff;
            }
            match best {
                Some((_, bd)) if dist >= bd => {}
                _ => best = Some((i, dist)),
            }
        }
        let (idx, _) = best.expect("candidate available");
        used[idx] = true;
        for (s, &v) in sum.iter_mut().zip(features.row(idx).iter()) {
            *s += v as f64;
        }
        selected.push(idx);
    }
    selected
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_synthetic;
    use crate::model::build_model;
    use crate::scenario::build_traditional;

    #[test]
    fn quota_arithmetic() {
        // 2000 over 50 classes -> 40 each; over 60 -> 33 with 20 slots idle.
        assert_eq!(2000usize / 50, 40);
        assert_eq!(2000usize / 60, 33);
        assert_eq!(2000 - 33 * 60, 20);
    }

    #[test]
    fn update_respects_budget_and_classes() {
        let ds = build_synthetic(6, 8, 10, 2, 1);
        let stream = build_traditional(&ds, 3, 3, 1).unwrap();
        let mut model = build_model("small-conv", 1, 3, 1).unwrap();
        let mut buffer = ExemplarBuffer::new(12, SelectionPolicy::Random, 7);
        buffer.update(&stream.tasks[0], &ds, &mut model).unwrap();
        assert_eq!(buffer.len(), 12);
        assert_eq!(buffer.classes(), vec![0, 1, 2]);
        model.grow_classifiers(3);
        buffer.update(&stream.tasks[1], &ds, &mut model).unwrap();
        assert!(buffer.len() <= 12);
        assert_eq!(buffer.classes(), vec![0, 1, 2, 3, 4, 5]);
        // 12 / 6 = 2 per class.
        for (_, label) in buffer.samples() {
            assert!(label < 6);
        }
        assert_eq!(buffer.len(), 12);
    }

    #[test]
    fn budget_below_class_count_errors() {
        let ds = build_synthetic(5, 8, 4, 2, 2);
        let stream = build_traditional(&ds, 5, 0, 2).unwrap();
        let mut model = build_model("small-conv", 1, 5, 2).unwrap();
        let mut buffer = ExemplarBuffer::new(3, SelectionPolicy::Random, 7);
        assert!(buffer.update(&stream.tasks[0], &ds, &mut model).is_err());
    }

    /// Brute-force greedy oracle on plain vectors.
    fn herding_oracle(points: &[Vec<f64>], take: usize) -> Vec<usize> {
        let n = points.len();
        let d = points[0].len();
        let mean: Vec<f64> = (0..d)
            .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let mut chosen: Vec<usize> = Vec::new();
        while chosen.len() < take.min(n) {
            let mut best_idx = usize::MAX;
            let mut best_dist = f64::INFINITY;
            for i in 0..n {
                if chosen.contains(&i) {
                    continue;
                }
                let k = (chosen.len() + 1) as f64;
                let dist: f64 = (0..d)
                    .map(|j| {
                        let s: f64 = chosen.iter().map(|&c| points[c][j]).sum::<f64>() + points[i][j];
                        (mean[j] - s / k).powi(2)
                    })
                    .sum();
                if dist < best_dist {
                    best_dist = dist;
                    best_idx = i;
                }
            }
            chosen.push(best_idx);
        }
        chosen
    }

    #[test]
    fn herding_matches_brute_force_oracle() {
        // Values exactly representable in f32 and free of distance ties.
        let points = vec![
            vec![0.0, 0.125],
            vec![0.25, -0.125],
            vec![-0.125, 0.0],
            vec![0.0625, 0.0625],
            vec![3.0, 3.0], // outlier
            vec![0.125, -0.25],
            vec![-0.25, 0.1875],
            vec![0.0, -0.0625],
        ];
        let features = Array2::from_shape_fn((8, 2), |(i, j)| points[i][j] as f32);
        let got = herding_order(&features, 8);
        let want = herding_oracle(&points, 8);
        assert_eq!(got, want);
        // Frozen oracle output for this point set. The class mean is pulled
        // toward the outlier, so greedy mean-matching picks it mid-sequence
        // once the cluster's +x/+y candidates are spent, never first.
        assert_eq!(got, vec![3, 0, 1, 6, 4, 5, 2, 7]);
        assert_ne!(got[0], 4);
    }

    #[test]
    fn herding_prefix_property_under_requota() {
        let features = Array2::from_shape_fn((6, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f32 * 0.3);
        let five = herding_order(&features, 5);
        let three = herding_order(&features, 3);
        assert_eq!(&five[..3], &three[..]);
    }
}
