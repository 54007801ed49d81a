//! Rotation-expanded self-supervision for class-incremental learning.
//!
//! The crate trains each of `M` lossless image transforms (rotations, and
//! rotation-plus-flip for `M = 8`) as its own class, growing a `K`-class
//! problem to `K*M` outputs, and averages the matching per-rotation logits
//! back down to `K` classes at inference. Around that core it provides:
//!
//! - backbones and a growing per-task classifier bank ([`model`])
//! - task-stream builders for traditional, long-tail, and semi-supervised
//!   class-incremental scenarios ([`scenario`])
//! - an incremental training loop with exemplar replay and pluggable
//!   augmented losses such as logit distillation ([`trainer`])
//! - accuracy matrices, average incremental accuracy, Grad-CAM attention
//!   maps, and the rotation-count ablation ([`eval`])

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod report;
pub mod scenario;
pub mod trainer;
pub mod transform;

pub use error::{Error, Result};
pub use transform::{
    aggregate_inference, aggss_loss, aggss_loss_with_grad, expand_batch, remap_label,
    AggregatedLogits, ExpandedBatch, TransformSet,
};
