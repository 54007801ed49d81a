//! Pluggable augmented losses added on top of the classification loss at
//! incremental tasks. Each plugin sees the expanded batch and the raw
//! logits and contributes a scalar plus a logit-space gradient.

use crate::error::{Error, Result};
use crate::model::ModelSnapshot;
use crate::transform::ExpandedBatch;
use ndarray::{s, Array2};

use super::config::PluginSpec;

pub struct PluginContext<'a> {
    /// Frozen previous-task model; absent at task 0.
    pub teacher: Option<&'a ModelSnapshot>,
    pub expanded: &'a ExpandedBatch,
    /// Student logits over all `K_seen * M` units.
    pub logits: &'a Array2<f32>,
    /// Width of the old-task slice (`K_old * M`), 0 at task 0.
    pub old_units: usize,
}

pub struct PluginOutput {
    pub loss: f32,
    /// d(loss)/d(student logits), full width; `None` means zero.
    pub grad_logits: Option<Array2<f32>>,
}

impl PluginOutput {
    pub fn zero() -> Self {
        Self {
            loss: 0.0,
            grad_logits: None,
        }
    }
}

pub trait AugmentedLoss: Send + Sync {
    fn name(&self) -> &str;
    fn needs_teacher(&self) -> bool {
        true
    }
    /// Whether the plugin consumes unlabeled samples; the training loop
    /// feeds them only to plugins that opt in.
    fn supports_unlabeled(&self) -> bool {
        false
    }
    fn compute(&self, ctx: &PluginContext<'_>) -> Result<PluginOutput>;
}

pub struct WeightedPlugin {
    pub plugin: Box<dyn AugmentedLoss>,
    pub weight: f32,
}

pub fn build_plugins(specs: &[PluginSpec]) -> Result<Vec<WeightedPlugin>> {
    specs
        .iter()
        .map(|spec| {
            if spec.weight < 0.0 {
                return Err(Error::Config(format!(
                    "plugin `{}` has negative weight {}",
                    spec.name, spec.weight
                )));
            }
            let plugin: Box<dyn AugmentedLoss> = match spec.name.as_str() {
                "distillation" => Box::new(distillation_plugin(spec.temperature.unwrap_or(2.0))?),
                other => {
                    return Err(Error::Config(format!(
                        "unknown plugin `{other}` (known: distillation)"
                    )))
                }
            };
            Ok(WeightedPlugin {
                plugin,
                weight: spec.weight,
            })
        })
        .collect()
}

/// Temperature-scaled logit distillation over the old-task units.
///
/// `L = T^2 * mean_rows KL(softmax(teacher/T) || softmax(student_old/T))`,
/// computed across the full rotation-expanded old slice.
pub fn distillation_plugin(temperature: f32) -> Result<DistillationPlugin> {
    if temperature <= 0.0 {
        return Err(Error::Config(format!(
            "distillation temperature must be positive, got {temperature}"
        )));
    }
    Ok(DistillationPlugin { temperature })
}

pub struct DistillationPlugin {
    temperature: f32,
}

impl DistillationPlugin {
    /// Core computation on explicit teacher/student logit matrices.
    pub fn loss_and_grad(
        &self,
        teacher_logits: &Array2<f32>,
        student_old: &Array2<f32>,
    ) -> (f32, Array2<f32>) {
        let t = self.temperature as f64;
        let rows = teacher_logits.nrows();
        let width = teacher_logits.ncols();
        let mut grad = Array2::<f32>::zeros((rows, width));
        let mut total = 0f64;
        for r in 0..rows {
            let pt = softmax_scaled(teacher_logits.row(r), t);
            let ps = softmax_scaled(student_old.row(r), t);
            let mut kl = 0f64;
            for j in 0..width {
                if pt[j] > 0.0 {
                    kl += pt[j] * (pt[j].ln() - ps[j].ln());
                }
                // d(T^2 * mean KL)/d(student) = (T / rows) * (ps - pt)
                grad[[r, j]] = ((t / rows as f64) * (ps[j] - pt[j])) as f32;
            }
            total += kl;
        }
        let loss = (t * t * total / rows as f64) as f32;
        (loss, grad)
    }
}

fn softmax_scaled(row: ndarray::ArrayView1<'_, f32>, t: f64) -> Vec<f64> {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64 / t;
    let exps: Vec<f64> = row.iter().map(|&v| ((v as f64) / t - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / z).collect()
}

impl AugmentedLoss for DistillationPlugin {
    fn name(&self) -> &str {
        "distillation"
    }

    fn compute(&self, ctx: &PluginContext<'_>) -> Result<PluginOutput> {
        let teacher = match ctx.teacher {
            Some(t) => t,
            None => return Ok(PluginOutput::zero()),
        };
        if ctx.old_units == 0 || ctx.old_units > ctx.logits.ncols() {
            return Err(Error::Shape(format!(
                "old-unit slice {} incompatible with logit width {}",
                ctx.old_units,
                ctx.logits.ncols()
            )));
        }
        let teacher_logits = teacher.forward(&ctx.expanded.images);
        if teacher_logits.ncols() != ctx.old_units {
            return Err(Error::Shape(format!(
                "teacher produces {} units, expected {}",
                teacher_logits.ncols(),
                ctx.old_units
            )));
        }
        let student_old = ctx.logits.slice(s![.., ..ctx.old_units]).to_owned();
        let (loss, grad_old) = self.loss_and_grad(&teacher_logits, &student_old);
        let mut grad = Array2::<f32>::zeros(ctx.logits.raw_dim());
        grad.slice_mut(s![.., ..ctx.old_units]).assign(&grad_old);
        Ok(PluginOutput {
            loss,
            grad_logits: Some(grad),
        })
    }
}
