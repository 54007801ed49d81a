//! Task-stream construction for class-incremental scenarios.
//!
//! A stream assigns dataset classes to an ordered sequence of tasks with
//! pairwise-disjoint class sets. Classes are renumbered by stream position
//! ("stream labels"), so task `t`'s classes occupy a contiguous label range
//! after all earlier tasks.

use crate::data::ImageDataset;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_MIN_PER_CLASS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Traditional,
    LongtailOrdered,
    LongtailShuffled,
    SemiSupervised,
}

/// One task's data: labeled pairs, an optional unlabeled pool, and
/// per-class labeled counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    /// Original dataset class ids, in stream order.
    pub classes: Vec<u16>,
    /// (train-store index, stream label) pairs.
    pub labeled: Vec<(u32, u16)>,
    /// Train-store indices carrying no label.
    pub unlabeled: Vec<u32>,
    /// Labeled count per stream label, aligned with `classes`.
    pub class_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStream {
    pub kind: ScenarioKind,
    pub seed: u64,
    /// All dataset classes in stream order (trained first, then outliers,
    /// then any unused classes).
    pub class_order: Vec<u16>,
    /// Class counts per split, including a trailing outlier split if any.
    pub splits: Vec<usize>,
    pub tasks: Vec<TaskDataset>,
    /// Classes reserved as unlabeled-only outliers.
    pub outlier_classes: Vec<u16>,
    pub warnings: Vec<String>,
}

impl TaskStream {
    /// Number of real classes the model will be trained on.
    pub fn total_trained_classes(&self) -> usize {
        self.tasks.iter().map(|t| t.classes.len()).sum()
    }

    pub fn task_class_counts(&self) -> Vec<usize> {
        self.tasks.iter().map(|t| t.classes.len()).collect()
    }

    /// Stream label of an original class id, if it is a trained class.
    pub fn stream_label_of(&self, orig: u16) -> Option<u16> {
        let trained = self.total_trained_classes();
        self.class_order[..trained]
            .iter()
            .position(|&c| c == orig)
            .map(|p| p as u16)
    }

    /// Test rows `(test-store index, stream label)` for one task.
    pub fn test_rows(&self, ds: &ImageDataset, task: usize) -> Vec<(u32, u16)> {
        let classes = &self.tasks[task].classes;
        let mut rows = Vec::new();
        for (i, &y) in ds.test.labels.iter().enumerate() {
            if let Some(pos) = classes.iter().position(|&c| c == y) {
                let offset: usize = self.tasks[..task].iter().map(|t| t.classes.len()).sum();
                rows.push((i as u32, (offset + pos) as u16));
            }
        }
        rows
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for task in &self.tasks {
            for &c in &task.classes {
                if !seen.insert(c) {
                    return Err(Error::InvalidArgument(format!(
                        "class {c} assigned to two tasks"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn permuted_classes(total: usize, seed: u64) -> Vec<u16> {
    let mut order: Vec<u16> = (0..total as u16).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
}

fn split_sizes(total: usize, base: usize, increment: usize) -> Result<Vec<usize>> {
    if base == 0 || base > total {
        return Err(Error::InvalidArgument(format!(
            "base task must hold between 1 and {total} classes, got {base}"
        )));
    }
    let rest = total - base;
    if rest == 0 {
        return Ok(vec![base]);
    }
    if increment == 0 || rest % increment != 0 {
        return Err(Error::InvalidArgument(format!(
            "{rest} remaining classes do not divide into increments of {increment}"
        )));
    }
    let mut splits = vec![base];
    splits.extend(std::iter::repeat(increment).take(rest / increment));
    Ok(splits)
}

/// Shuffles a class's train indices with a stream- and class-derived seed.
fn class_pool(ds: &ImageDataset, class: u16, seed: u64) -> Vec<u32> {
    let mut pool: Vec<u32> = ds
        .train
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &y)| y == class)
        .map(|(i, _)| i as u32)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9E37 + class as u64 * 0x100_0001));
    pool.shuffle(&mut rng);
    pool
}

/// Equal class sizes, all samples labeled.
pub fn build_traditional(
    ds: &ImageDataset,
    base: usize,
    increment: usize,
    seed: u64,
) -> Result<TaskStream> {
    let total = ds.num_classes();
    let splits = split_sizes(total, base, increment)?;
    let class_order = permuted_classes(total, seed);
    let mut tasks = Vec::new();
    let mut offset = 0usize;
    for &width in &splits {
        let classes: Vec<u16> = class_order[offset..offset + width].to_vec();
        let mut labeled = Vec::new();
        let mut class_counts = Vec::new();
        for (pos, &c) in classes.iter().enumerate() {
            let stream_label = (offset + pos) as u16;
            let rows: Vec<(u32, u16)> = ds
                .train
                .labels
                .iter()
                .enumerate()
                .filter(|(_, &y)| y == c)
                .map(|(i, _)| (i as u32, stream_label))
                .collect();
            class_counts.push(rows.len());
            labeled.extend(rows);
        }
        tasks.push(TaskDataset {
            classes,
            labeled,
            unlabeled: Vec::new(),
            class_counts,
        });
        offset += width;
    }
    let stream = TaskStream {
        kind: ScenarioKind::Traditional,
        seed,
        class_order,
        splits,
        tasks,
        outlier_classes: Vec::new(),
        warnings: Vec::new(),
    };
    stream.check_disjoint()?;
    Ok(stream)
}

/// Exponential imbalance profile `n_c = round(n_max * rho^(c/(C-1)))` over
/// stream positions; `ordered` assigns the profile along the task sequence,
/// shuffled permutes it over classes first.
#[allow(clippy::too_many_arguments)]
pub fn build_longtail(
    ds: &ImageDataset,
    base: usize,
    increment: usize,
    imbalance_ratio: f64,
    ordered: bool,
    seed: u64,
    min_per_class: usize,
) -> Result<TaskStream> {
    if !(imbalance_ratio > 0.0 && imbalance_ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "imbalance ratio must lie in (0, 1], got {imbalance_ratio}"
        )));
    }
    let total = ds.num_classes();
    let splits = split_sizes(total, base, increment)?;
    let class_order = permuted_classes(total, seed);

    let by_class = ds.train.indices_by_class(total);
    let n_max = by_class.iter().map(|v| v.len()).min().unwrap_or(0);
    let mut warnings = Vec::new();
    let mut counts: Vec<usize> = (0..total)
        .map(|c| {
            let exponent = if total > 1 {
                c as f64 / (total - 1) as f64
            } else {
                0.0
            };
            let n = (n_max as f64 * imbalance_ratio.powf(exponent)).round() as usize;
            if n < min_per_class {
                warnings.push(format!(
                    "class position {c}: profile count {n} clamped to {min_per_class}"
                ));
                min_per_class.min(n_max)
            } else {
                n
            }
        })
        .collect();
    if !ordered {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x517F_F1E5);
        counts.shuffle(&mut rng);
    }

    let mut tasks = Vec::new();
    let mut offset = 0usize;
    for &width in &splits {
        let classes: Vec<u16> = class_order[offset..offset + width].to_vec();
        let mut labeled = Vec::new();
        let mut class_counts = Vec::new();
        for (pos, &c) in classes.iter().enumerate() {
            let stream_label = (offset + pos) as u16;
            let take = counts[offset + pos];
            let pool = class_pool(ds, c, seed);
            let take = take.min(pool.len());
            class_counts.push(take);
            labeled.extend(pool[..take].iter().map(|&i| (i, stream_label)));
        }
        tasks.push(TaskDataset {
            classes,
            labeled,
            unlabeled: Vec::new(),
            class_counts,
        });
        offset += width;
    }
    let stream = TaskStream {
        kind: if ordered {
            ScenarioKind::LongtailOrdered
        } else {
            ScenarioKind::LongtailShuffled
        },
        seed,
        class_order,
        splits,
        tasks,
        outlier_classes: Vec::new(),
        warnings,
    };
    stream.check_disjoint()?;
    Ok(stream)
}

/// Relative pool weights for unlabeled mixing: current-task remainder,
/// previous-task samples, outlier-class samples.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct MixingWeights {
    pub current: f64,
    pub previous: f64,
    pub outlier: f64,
}

impl Default for MixingWeights {
    fn default() -> Self {
        Self {
            current: 1.0,
            previous: 1.0,
            outlier: 1.0,
        }
    }
}

/// Per-task labeled/unlabeled partitions. When `outlier_task` is set, the
/// final split's classes never appear labeled; their samples feed the
/// unlabeled pools of the trained tasks.
pub fn build_semisupervised(
    ds: &ImageDataset,
    splits: &[usize],
    label_fraction: f64,
    outlier_task: bool,
    seed: u64,
    mixing: MixingWeights,
) -> Result<TaskStream> {
    if splits.is_empty() {
        return Err(Error::InvalidArgument("splits must be non-empty".into()));
    }
    if !(label_fraction > 0.0 && label_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "label fraction must lie in (0, 1], got {label_fraction}"
        )));
    }
    let total = ds.num_classes();
    let used: usize = splits.iter().sum();
    if used > total {
        return Err(Error::InvalidArgument(format!(
            "splits cover {used} classes but the dataset has {total}"
        )));
    }
    let trained_splits = if outlier_task {
        if splits.len() < 2 {
            return Err(Error::InvalidArgument(
                "an outlier task needs at least two splits".into(),
            ));
        }
        &splits[..splits.len() - 1]
    } else {
        splits
    };
    let class_order = permuted_classes(total, seed);
    let trained: usize = trained_splits.iter().sum();
    let outlier_classes: Vec<u16> = if outlier_task {
        class_order[trained..used].to_vec()
    } else {
        Vec::new()
    };

    // Remainders available for unlabeled pools, consumed without replacement.
    let mut prev_remainder: Vec<u32> = Vec::new();
    let mut outlier_pool: Vec<u32> = Vec::new();
    for &c in &outlier_classes {
        outlier_pool.extend(class_pool(ds, c, seed));
    }

    let mut draw_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55C1_1AB5);
    let mut tasks = Vec::new();
    let mut offset = 0usize;
    for &width in trained_splits {
        let classes: Vec<u16> = class_order[offset..offset + width].to_vec();
        let mut labeled = Vec::new();
        let mut class_counts = Vec::new();
        let mut current_remainder = Vec::new();
        for (pos, &c) in classes.iter().enumerate() {
            let stream_label = (offset + pos) as u16;
            let pool = class_pool(ds, c, seed);
            let n_lab = ((pool.len() as f64) * label_fraction).round() as usize;
            if n_lab == 0 {
                return Err(Error::InvalidArgument(format!(
                    "label fraction {label_fraction} leaves class {c} without labeled samples"
                )));
            }
            let n_lab = n_lab.min(pool.len());
            class_counts.push(n_lab);
            labeled.extend(pool[..n_lab].iter().map(|&i| (i, stream_label)));
            current_remainder.extend_from_slice(&pool[n_lab..]);
        }

        // Pool size targets the remainder count; category shares follow the
        // mixing weights, renormalized over categories with samples left.
        let target = current_remainder.len() as f64;
        let avail = [
            (mixing.current, current_remainder.len()),
            (mixing.previous, prev_remainder.len()),
            (mixing.outlier, outlier_pool.len()),
        ];
        let w_sum: f64 = avail
            .iter()
            .filter(|&&(_, n)| n > 0)
            .map(|&(w, _)| w)
            .sum::<f64>()
            .max(1e-9);
        let share = |w: f64, n: usize| (((target * w / w_sum).round()) as usize).min(n);
        let n_cur = share(mixing.current, current_remainder.len());
        let n_prev = share(mixing.previous, prev_remainder.len());
        let n_out = share(mixing.outlier, outlier_pool.len());
        let mut unlabeled = draw_without_replacement(&mut current_remainder, n_cur, &mut draw_rng);
        unlabeled.extend(draw_without_replacement(&mut prev_remainder, n_prev, &mut draw_rng));
        unlabeled.extend(draw_without_replacement(&mut outlier_pool, n_out, &mut draw_rng));

        // Whatever was not drawn stays available as previous-task material.
        prev_remainder.extend(current_remainder);
        tasks.push(TaskDataset {
            classes,
            labeled,
            unlabeled,
            class_counts,
        });
        offset += width;
    }
    let stream = TaskStream {
        kind: ScenarioKind::SemiSupervised,
        seed,
        class_order,
        splits: splits.to_vec(),
        tasks,
        outlier_classes,
        warnings: Vec::new(),
    };
    stream.check_disjoint()?;
    Ok(stream)
}

fn draw_without_replacement(pool: &mut Vec<u32>, n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut out = Vec::with_capacity(n.min(pool.len()));
    for _ in 0..n {
        if pool.is_empty() {
            break;
        }
        let idx = rng.gen_range(0..pool.len());
        out.push(pool.swap_remove(idx));
    }
    out
}

/// Manifest wrapper binding a stream to the dataset it indexes into.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub version: u32,
    pub dataset: DatasetDescriptor,
    pub stream: TaskStream,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetDescriptor {
    pub name: String,
    pub num_classes: usize,
    pub train_len: usize,
    pub test_len: usize,
}

impl DatasetDescriptor {
    pub fn of(ds: &ImageDataset) -> Self {
        Self {
            name: ds.name.clone(),
            num_classes: ds.num_classes(),
            train_len: ds.train.len(),
            test_len: ds.test.len(),
        }
    }
}

/// Writes a deterministic JSON manifest; identical streams produce
/// byte-identical files.
pub fn export_manifest(stream: &TaskStream, ds: &ImageDataset, path: impl AsRef<Path>) -> Result<()> {
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        dataset: DatasetDescriptor::of(ds),
        stream: stream.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(path.as_ref(), json)?;
    Ok(())
}

pub fn import_manifest(path: impl AsRef<Path>, ds: &ImageDataset) -> Result<TaskStream> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|_| Error::MissingPath(path.as_ref().display().to_string()))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    let expect = DatasetDescriptor::of(ds);
    if manifest.dataset != expect {
        return Err(Error::Manifest(format!(
            "manifest was built for {:?}, loaded dataset is {:?}",
            manifest.dataset, expect
        )));
    }
    Ok(manifest.stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_synthetic;

    fn dataset(classes: usize, per_class: usize) -> ImageDataset {
        build_synthetic(classes, 8, per_class, 4, 99)
    }

    #[test]
    fn traditional_split_counts() {
        let ds = dataset(100, 6);
        let stream = build_traditional(&ds, 50, 10, 1).unwrap();
        assert_eq!(stream.task_class_counts(), vec![50, 10, 10, 10, 10, 10]);
        let stream5 = build_traditional(&ds, 50, 5, 1).unwrap();
        assert_eq!(stream5.tasks.len(), 11);
        // Degenerate joint training: every class in one task.
        let joint = build_traditional(&ds, 100, 0, 1).unwrap();
        assert_eq!(joint.tasks.len(), 1);
        assert!(build_traditional(&ds, 50, 7, 1).is_err());
        assert!(build_traditional(&ds, 50, 0, 1).is_err());
    }

    #[test]
    fn disjoint_and_conserving() {
        let ds = dataset(12, 5);
        let stream = build_traditional(&ds, 6, 3, 3).unwrap();
        let mut seen = std::collections::HashSet::new();
        for task in &stream.tasks {
            for &(idx, _) in &task.labeled {
                assert!(seen.insert(idx), "sample {idx} in two tasks");
            }
        }
        assert!(seen.len() <= ds.train.len());
        let total: usize = stream.tasks.iter().map(|t| t.labeled.len()).sum();
        assert_eq!(total, ds.train.len());
    }

    #[test]
    fn seeds_change_class_assignment() {
        let ds = dataset(10, 4);
        let a = build_traditional(&ds, 5, 5, 1).unwrap();
        let b = build_traditional(&ds, 5, 5, 2).unwrap();
        assert_ne!(a.class_order, b.class_order);
        let a2 = build_traditional(&ds, 5, 5, 1).unwrap();
        assert_eq!(a, a2);
    }

    #[test]
    fn longtail_profile_matches_formula() {
        let ds = dataset(100, 500);
        let stream = build_longtail(&ds, 50, 10, 0.01, true, 5, DEFAULT_MIN_PER_CLASS).unwrap();
        let counts: Vec<usize> = stream.tasks.iter().flat_map(|t| t.class_counts.clone()).collect();
        // Independent evaluation of the profile.
        for (c, &n) in counts.iter().enumerate() {
            let expect = (500.0 * 0.01f64.powf(c as f64 / 99.0)).round() as usize;
            let expect = expect.max(DEFAULT_MIN_PER_CLASS);
            assert_eq!(n, expect, "class position {c}");
        }
        assert_eq!(counts[0], 500);
        assert_eq!(counts[99], 5);
        for w in counts.windows(2) {
            assert!(w[0] >= w[1], "ordered counts must be non-increasing");
        }
    }

    #[test]
    fn longtail_rho_one_equals_traditional() {
        let ds = dataset(10, 20);
        let lt = build_longtail(&ds, 5, 5, 1.0, true, 4, DEFAULT_MIN_PER_CLASS).unwrap();
        let tr = build_traditional(&ds, 5, 5, 4).unwrap();
        let lt_counts: Vec<usize> = lt.tasks.iter().flat_map(|t| t.class_counts.clone()).collect();
        let tr_counts: Vec<usize> = tr.tasks.iter().flat_map(|t| t.class_counts.clone()).collect();
        assert_eq!(lt_counts, tr_counts);
    }

    #[test]
    fn shuffled_longtail_permutes_the_count_multiset() {
        let ds = dataset(20, 100);
        let ordered = build_longtail(&ds, 10, 5, 0.05, true, 6, DEFAULT_MIN_PER_CLASS).unwrap();
        let shuffled = build_longtail(&ds, 10, 5, 0.05, false, 6, DEFAULT_MIN_PER_CLASS).unwrap();
        let mut a: Vec<usize> = ordered.tasks.iter().flat_map(|t| t.class_counts.clone()).collect();
        let mut b: Vec<usize> = shuffled.tasks.iter().flat_map(|t| t.class_counts.clone()).collect();
        assert_ne!(a, b, "shuffled profile should differ positionally");
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b, "count multisets must match");
    }

    #[test]
    fn longtail_clamps_and_warns() {
        let ds = dataset(10, 50);
        let stream = build_longtail(&ds, 5, 5, 0.01, true, 7, DEFAULT_MIN_PER_CLASS).unwrap();
        let counts: Vec<usize> = stream.tasks.iter().flat_map(|t| t.class_counts.clone()).collect();
        assert!(counts.iter().all(|&n| n >= DEFAULT_MIN_PER_CLASS.min(50)));
        assert!(!stream.warnings.is_empty());
    }

    #[test]
    fn semisupervised_reserves_outliers() {
        let ds = dataset(100, 10);
        let stream = build_semisupervised(
            &ds,
            &[50, 10, 10, 10, 10],
            0.5,
            true,
            8,
            MixingWeights::default(),
        )
        .unwrap();
        assert_eq!(stream.splits, vec![50, 10, 10, 10, 10]);
        assert_eq!(stream.tasks.len(), 4, "last split is outlier-only");
        assert_eq!(stream.outlier_classes.len(), 10);
        // No outlier-class sample ever appears with a label.
        for task in &stream.tasks {
            for &(idx, _) in &task.labeled {
                let orig = ds.train.labels[idx as usize];
                assert!(!stream.outlier_classes.contains(&orig));
            }
        }
        // Outlier samples do appear in some unlabeled pool.
        let mut saw_outlier = false;
        for task in &stream.tasks {
            for &idx in &task.unlabeled {
                if stream.outlier_classes.contains(&ds.train.labels[idx as usize]) {
                    saw_outlier = true;
                }
            }
        }
        assert!(saw_outlier);
        // Balanced 3-task configuration.
        let balanced = build_semisupervised(
            &ds,
            &[20, 20, 20, 20],
            0.5,
            true,
            8,
            MixingWeights::default(),
        )
        .unwrap();
        assert_eq!(balanced.tasks.len(), 3);
        assert_eq!(balanced.splits, vec![20, 20, 20, 20]);
    }

    #[test]
    fn full_label_fraction_degenerates_to_traditional() {
        let ds = dataset(10, 8);
        let ss = build_semisupervised(&ds, &[5, 5], 1.0, false, 9, MixingWeights::default()).unwrap();
        let tr = build_traditional(&ds, 5, 5, 9).unwrap();
        assert_eq!(ss.tasks.len(), tr.tasks.len());
        for (a, b) in ss.tasks.iter().zip(&tr.tasks) {
            assert!(a.unlabeled.is_empty());
            assert_eq!(a.class_counts, b.class_counts);
            let mut av: Vec<_> = a.labeled.clone();
            let mut bv: Vec<_> = b.labeled.clone();
            av.sort_unstable();
            bv.sort_unstable();
            assert_eq!(av, bv);
        }
    }

    #[test]
    fn unlabeled_pools_are_disjoint_across_tasks() {
        let ds = dataset(30, 20);
        let stream = build_semisupervised(
            &ds,
            &[10, 10, 5, 5],
            0.5,
            true,
            10,
            MixingWeights::default(),
        )
        .unwrap();
        let mut seen = std::collections::HashSet::new();
        for task in &stream.tasks {
            for &idx in &task.unlabeled {
                assert!(seen.insert(idx), "unlabeled sample {idx} reused");
            }
        }
    }

    #[test]
    fn manifest_round_trip_and_determinism() {
        let ds = dataset(12, 6);
        let stream = build_longtail(&ds, 6, 3, 0.1, false, 11, DEFAULT_MIN_PER_CLASS).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("m1.json");
        let p2 = dir.path().join("m2.json");
        export_manifest(&stream, &ds, &p1).unwrap();
        export_manifest(&stream, &ds, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let restored = import_manifest(&p1, &ds).unwrap();
        assert_eq!(restored, stream);
        // A different dataset is rejected.
        let other = dataset(13, 6);
        assert!(matches!(
            import_manifest(&p1, &other),
            Err(Error::Manifest(_))
        ));
    }

    #[test]
    fn test_rows_map_to_stream_labels() {
        let ds = dataset(6, 5);
        let stream = build_traditional(&ds, 3, 3, 12).unwrap();
        let rows = stream.test_rows(&ds, 1);
        assert!(!rows.is_empty());
        for &(idx, label) in &rows {
            let orig = ds.test.labels[idx as usize];
            assert_eq!(stream.stream_label_of(orig), Some(label));
            assert!(label >= 3);
        }
    }
}
