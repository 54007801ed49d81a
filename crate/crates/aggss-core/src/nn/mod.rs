//! Minimal CPU neural-network kit: layers with explicit forward/backward,
//! parameters with gradient and momentum buffers, and an SGD optimizer.
//!
//! Activations are `(B, C, H, W)` f32 arrays. Layers cache whatever their
//! backward pass needs during forward; `backward` consumes the cache and
//! accumulates parameter gradients. All parallel reductions combine partial
//! results in a fixed order so that repeated runs are bit-identical.

mod block;
mod conv;
mod init;
mod linear;
mod norm;
mod pool;
mod sgd;

pub use block::ResidualBlock;
pub use conv::Conv2d;
pub use init::SeedSequence;
pub use linear::Linear;
pub use norm::BatchNorm2d;
pub use pool::{GlobalAvgPool, MaxPool2};
pub use sgd::Sgd;

use ndarray::{Array4, ArrayD};

/// A trainable tensor with its gradient and momentum buffers.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: ArrayD<f32>,
    pub grad: ArrayD<f32>,
    pub velocity: ArrayD<f32>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: ArrayD<f32>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        let velocity = ArrayD::zeros(value.raw_dim());
        Self {
            name: name.into(),
            value,
            grad,
            velocity,
        }
    }
}

pub trait Layer: Send {
    fn forward(&mut self, x: &Array4<f32>, train: bool) -> Array4<f32>;

    /// Propagates `grad_out` back through the layer, accumulating parameter
    /// gradients and returning the gradient with respect to the input.
    fn backward(&mut self, grad_out: &Array4<f32>) -> Array4<f32>;

    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Param)) {}

    /// Walks named state for serialization: parameters plus any
    /// non-trainable buffers (e.g. batch-norm running statistics).
    fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f32>)) {
        self.visit_params(&mut |p| {
            let Param { name, value, .. } = p;
            f(name, value);
        });
    }

    fn drop_caches(&mut self) {}

    fn clone_box(&self) -> Box<dyn Layer>;
}

impl Clone for Box<dyn Layer> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Rectified linear unit.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Array4<f32>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Relu {
    fn forward(&mut self, x: &Array4<f32>, _train: bool) -> Array4<f32> {
        let out = x.mapv(|v| v.max(0.0));
        self.mask = Some(out.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }));
        out
    }

    fn backward(&mut self, grad_out: &Array4<f32>) -> Array4<f32> {
        let mask = self.mask.take().expect("relu backward before forward");
        grad_out * &mask
    }

    fn drop_caches(&mut self) {
        self.mask = None;
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

/// An ordered stack of named layers with an optional gradient tap.
///
/// The tap captures the activation of a named layer during forward and the
/// gradient flowing into it during backward; Grad-CAM is built on it.
pub struct Sequential {
    items: Vec<(String, Box<dyn Layer>)>,
    tap: Option<usize>,
    tap_activation: Option<Array4<f32>>,
    tap_gradient: Option<Array4<f32>>,
}

impl Clone for Sequential {
    fn clone(&self) -> Self {
        Self {
            items: self.items.clone(),
            tap: self.tap,
            tap_activation: None,
            tap_gradient: None,
        }
    }
}

impl Sequential {
    pub fn new() -> Self {
        Self {
            items: Vec::new(),
            tap: None,
            tap_activation: None,
            tap_gradient: None,
        }
    }

    pub fn push(&mut self, name: impl Into<String>, layer: Box<dyn Layer>) {
        self.items.push((name.into(), layer));
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.items.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn set_tap(&mut self, name: Option<&str>) -> crate::Result<()> {
        match name {
            None => {
                self.tap = None;
                Ok(())
            }
            Some(n) => {
                let idx = self
                    .items
                    .iter()
                    .position(|(name, _)| name == n)
                    .ok_or_else(|| crate::Error::UnknownLayer(n.to_string()))?;
                self.tap = Some(idx);
                Ok(())
            }
        }
    }

    pub fn tap_activation(&self) -> Option<&Array4<f32>> {
        self.tap_activation.as_ref()
    }

    pub fn tap_gradient(&self) -> Option<&Array4<f32>> {
        self.tap_gradient.as_ref()
    }

    pub fn forward(&mut self, x: &Array4<f32>, train: bool) -> Array4<f32> {
        self.tap_activation = None;
        self.tap_gradient = None;
        let mut cur = x.clone();
        for (idx, (_, layer)) in self.items.iter_mut().enumerate() {
            cur = layer.forward(&cur, train);
            if self.tap == Some(idx) {
                self.tap_activation = Some(cur.clone());
            }
        }
        cur
    }

    pub fn backward(&mut self, grad_out: &Array4<f32>) -> Array4<f32> {
        let mut grad = grad_out.clone();
        for (idx, (_, layer)) in self.items.iter_mut().enumerate().rev() {
            if self.tap == Some(idx) {
                self.tap_gradient = Some(grad.clone());
            }
            grad = layer.backward(&grad);
        }
        grad
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for (_, layer) in &mut self.items {
            layer.visit_params(f);
        }
    }

    pub fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f32>)) {
        for (_, layer) in &mut self.items {
            layer.visit_state(f);
        }
    }

    pub fn drop_caches(&mut self) {
        self.tap_activation = None;
        self.tap_gradient = None;
        for (_, layer) in &mut self.items {
            layer.drop_caches();
        }
    }
}

impl Default for Sequential {
    fn default() -> Self {
        Self::new()
    }
}
