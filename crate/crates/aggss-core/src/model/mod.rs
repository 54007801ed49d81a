//! Incremental model: a backbone plus a growing bank of per-task
//! rotation-expanded classifier blocks.
//!
//! Block `t` maps features to `|C^(t)| * M` logits; the forward pass
//! concatenates blocks in task order so output unit `class*M + rotation`
//! keeps the interleaved layout as the bank grows.

mod backbones;
mod checkpoint;

pub use backbones::{build_backbone, SequentialBackbone, ARCHITECTURES};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, Normalization, CHECKPOINT_VERSION};

use crate::error::{Error, Result};
use crate::nn::{Linear, Param, SeedSequence};

use crate::transform::TransformSet;
use ndarray::{s, Array2, Array4, ArrayD};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

#[derive(Clone)]
pub struct IncrementalModel {
    backbone: SequentialBackbone,
    blocks: Vec<Linear>,
    architecture: String,
    m: usize,
    class_counts: Vec<usize>,
    seed: u64,
}

/// Builds a model with one classifier block of width `base_classes * m`.
pub fn build_model(
    architecture: &str,
    m: usize,
    base_classes: usize,
    seed: u64,
) -> Result<IncrementalModel> {
    TransformSet::new(m)?;
    if base_classes == 0 {
        return Err(Error::InvalidArgument(
            "base_classes must be at least 1".into(),
        ));
    }
    let mut seeds = SeedSequence::new(seed);
    let backbone = build_backbone(architecture, &mut seeds)?;
    let mut model = IncrementalModel {
        backbone,
        blocks: Vec::new(),
        architecture: architecture.to_string(),
        m,
        class_counts: Vec::new(),
        seed,
    };
    model.grow_classifiers(base_classes);
    Ok(model)
}

impl IncrementalModel {
    /// Appends a classifier block for `new_classes` real classes
    /// (`new_classes * M` output units). Existing blocks are untouched.
    pub fn grow_classifiers(&mut self, new_classes: usize) {
        assert!(new_classes >= 1, "grow_classifiers needs at least one class");
        let t = self.blocks.len();
        let d = self.backbone.feature_dim();
        let mut rng = SeedSequence::derive_slot(self.seed, 0x4845_4144 + t as u64);
        let block = Linear::new(&format!("head{t}"), d, new_classes * self.m, &mut rng);
        self.blocks.push(block);
        self.class_counts.push(new_classes);
    }

    pub fn architecture(&self) -> &str {
        &self.architecture
    }

    pub fn transform_count(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn feature_dim(&self) -> usize {
        self.backbone.feature_dim()
    }

    /// Real classes learned so far (excluding rotation expansion).
    pub fn classes_seen(&self) -> usize {
        self.class_counts.iter().sum()
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn task_count(&self) -> usize {
        self.blocks.len()
    }

    /// Total logit width `M * sum |C^(i)|`.
    pub fn output_width(&self) -> usize {
        self.classes_seen() * self.m
    }

    pub fn block_widths(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.out_features()).collect()
    }

    pub fn forward_features(&mut self, x: &Array4<f32>, train: bool) -> Array2<f32> {
        self.backbone.forward(x, train)
    }

    /// Full forward pass to concatenated logits `(B, output_width)`.
    pub fn forward(&mut self, x: &Array4<f32>, train: bool) -> Array2<f32> {
        let features = self.backbone.forward(x, train);
        self.forward_head(&features, true)
    }

    /// Classifier bank only; `keep_cache` enables a later backward pass.
    pub fn forward_head(&mut self, features: &Array2<f32>, keep_cache: bool) -> Array2<f32> {
        let b = features.nrows();
        let mut out = Array2::<f32>::zeros((b, self.output_width()));
        let mut offset = 0;
        for block in &mut self.blocks {
            let w = block.out_features();
            let logits = block.forward(features, keep_cache);
            out.slice_mut(s![.., offset..offset + w]).assign(&logits);
            offset += w;
        }
        out
    }

    /// Backward from d(loss)/d(logits) through the bank and backbone.
    pub fn backward(&mut self, dlogits: &Array2<f32>) -> Array4<f32> {
        let dfeat = self.backward_head(dlogits);
        self.backbone.backward(&dfeat)
    }

    pub fn backward_head(&mut self, dlogits: &Array2<f32>) -> Array2<f32> {
        assert_eq!(dlogits.ncols(), self.output_width(), "logit grad width");
        let mut dfeat = Array2::<f32>::zeros((dlogits.nrows(), self.feature_dim()));
        let mut offset = 0;
        for block in &mut self.blocks {
            let w = block.out_features();
            let slice = dlogits.slice(s![.., offset..offset + w]).to_owned();
            dfeat += &block.backward(&slice);
            offset += w;
        }
        dfeat
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.backbone.visit_params(f);
        for block in &mut self.blocks {
            block.visit_params(f);
        }
    }

    pub fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f32>)) {
        self.backbone.visit_state(f);
        for block in &mut self.blocks {
            block.visit_params(&mut |p| {
                let Param { name, value, .. } = p;
                f(name, value);
            });
        }
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |p| p.grad.fill(0.0));
    }

    pub fn drop_caches(&mut self) {
        self.backbone.drop_caches();
        for block in &mut self.blocks {
            block.drop_caches();
        }
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.backbone.layer_names()
    }

    pub fn default_tap(&self) -> &str {
        self.backbone.default_tap()
    }

    pub fn set_tap(&mut self, name: Option<&str>) -> Result<()> {
        self.backbone.set_tap(name)
    }

    pub fn tap_activation(&self) -> Option<&Array4<f32>> {
        self.backbone.tap_activation()
    }

    pub fn tap_gradient(&self) -> Option<&Array4<f32>> {
        self.backbone.tap_gradient()
    }

    /// Frozen copy for use as a distillation teacher.
    pub fn snapshot(&self) -> ModelSnapshot {
        let mut inner = self.clone();
        inner.drop_caches();
        ModelSnapshot {
            width: inner.output_width(),
            feature_dim: inner.feature_dim(),
            inner: Mutex::new(inner),
            queries: AtomicU64::new(0),
        }
    }
}

/// An immutable capture of a model's parameters.
///
/// Outputs are deterministic: inference always runs with frozen batch-norm
/// statistics. Forward calls are counted so trainers can assert the teacher
/// stayed untouched where it must.
pub struct ModelSnapshot {
    inner: Mutex<IncrementalModel>,
    queries: AtomicU64,
    width: usize,
    feature_dim: usize,
}

impl ModelSnapshot {
    pub fn forward(&self, x: &Array4<f32>) -> Array2<f32> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        let mut model = self.inner.lock().expect("snapshot lock");
        let out = model.forward(x, false);
        model.drop_caches();
        out
    }

    pub fn output_width(&self) -> usize {
        self.width
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array4, Dimension};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(b: usize, hw: usize, seed: u64) -> Array4<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn((b, 3, hw, hw), |_| rng.gen_range(-1.0f32..1.0))
    }

    #[test]
    fn build_model_width_examples() {
        let model = build_model("resnet-32-like", 4, 50, 1).unwrap();
        assert_eq!(model.output_width(), 200);
        let small = build_model("small-conv", 1, 10, 1).unwrap();
        assert_eq!(small.output_width(), 10);
        assert!(matches!(
            build_model("vgg-16", 4, 10, 1),
            Err(Error::UnknownArchitecture(_))
        ));
    }

    #[test]
    fn growth_follows_width_law() {
        let mut model = build_model("resnet-32-like", 4, 50, 2).unwrap();
        model.grow_classifiers(10);
        assert_eq!(model.block_widths(), vec![200, 40]);
        assert_eq!(model.output_width(), 240);
        for _ in 0..4 {
            model.grow_classifiers(10);
        }
        // 5-task split of 100 classes: 4 * (50 + 5*10) = 400 final units.
        assert_eq!(model.output_width(), 400);
    }

    #[test]
    fn growth_preserves_existing_logits() {
        let mut model = build_model("small-conv", 4, 5, 3).unwrap();
        let x = random_batch(2, 16, 7);
        let before = model.forward(&x, false);
        model.grow_classifiers(3);
        let after = model.forward(&x, false);
        assert_eq!(after.ncols(), 32);
        for i in 0..2 {
            for j in 0..20 {
                assert_eq!(before[[i, j]], after[[i, j]], "logit ({i},{j}) changed");
            }
        }
    }

    #[test]
    fn growth_preserves_parameters_bit_exact() {
        let mut model = build_model("small-conv", 2, 4, 4).unwrap();
        let mut before = Vec::new();
        model.visit_state(&mut |name, value| before.push((name.to_string(), value.clone())));
        model.grow_classifiers(6);
        let mut after = std::collections::HashMap::new();
        model.visit_state(&mut |name, value| {
            after.insert(name.to_string(), value.clone());
        });
        for (name, value) in before {
            assert_eq!(after[&name], value, "parameter {name} changed on grow");
        }
    }

    #[test]
    fn forward_is_deterministic_for_fixed_seed() {
        let x = random_batch(3, 16, 9);
        let mut a = build_model("small-conv", 4, 6, 42).unwrap();
        let mut b = build_model("small-conv", 4, 6, 42).unwrap();
        assert_eq!(a.forward(&x, false), b.forward(&x, false));
        let mut c = build_model("small-conv", 4, 6, 43).unwrap();
        assert_ne!(a.forward(&x, false), c.forward(&x, false));
    }

    #[test]
    fn snapshot_is_frozen_and_repeatable() {
        let mut model = build_model("small-conv", 2, 3, 5).unwrap();
        let x = random_batch(2, 16, 11);
        let teacher = model.snapshot();
        assert_eq!(teacher.output_width(), model.output_width());
        let t1 = teacher.forward(&x);
        // Mutate the student.
        model.visit_params(&mut |p| p.value.mapv_inplace(|v| v + 0.25));
        let t2 = teacher.forward(&x);
        assert_eq!(t1, t2);
        assert_eq!(teacher.query_count(), 2);
        let u1 = model.snapshot().forward(&x);
        let u2 = model.snapshot().forward(&x);
        assert_eq!(u1, u2);
    }

    #[test]
    fn backward_matches_finite_differences_on_head() {
        let mut model = build_model("small-conv", 2, 3, 6).unwrap();
        let x = random_batch(2, 16, 13);
        let logits = model.forward(&x, true);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let dlogits = Array2::from_shape_fn(logits.raw_dim().into_pattern(), |_| {
            rng.gen_range(-1.0f32..1.0)
        });
        model.zero_grads();
        let _ = model.backward(&dlogits);
        let scalar = |model: &mut IncrementalModel| -> f64 {
            let y = model.forward(&x, true);
            y.iter()
                .zip(dlogits.iter())
                .map(|(a, b)| (*a as f64) * (*b as f64))
                .sum()
        };
        let mut grad = None;
        model.visit_params(&mut |p| {
            if p.name == "head0.weight" {
                grad = Some(p.grad.clone());
            }
        });
        let grad = grad.unwrap();
        let h = 1e-3f32;
        for &(r, c) in &[(0usize, 0usize), (5, 32)] {
            let mut orig = 0.0;
            model.visit_params(&mut |p| {
                if p.name == "head0.weight" {
                    orig = p.value[[r, c]];
                    p.value[[r, c]] = orig + h;
                }
            });
            let up = scalar(&mut model);
            model.visit_params(&mut |p| {
                if p.name == "head0.weight" {
                    p.value[[r, c]] = orig - h;
                }
            });
            let down = scalar(&mut model);
            model.visit_params(&mut |p| {
                if p.name == "head0.weight" {
                    p.value[[r, c]] = orig;
                }
            });
            let fd = ((up - down) / (2.0 * h as f64)) as f32;
            assert!(
                (fd - grad[[r, c]]).abs() < 2e-2,
                "head grad mismatch at ({r},{c}): fd={fd} got={}",
                grad[[r, c]]
            );
        }
    }
}
