//! Incremental training loop.
//!
//! Task 0 minimizes the rotation-expanded classification loss alone; later
//! tasks add weighted plugin losses on minibatches drawn from the current
//! task's labeled data plus the exemplar buffer. Every minibatch is
//! rotation-expanded before any loss sees it.

mod config;
mod exemplar;
mod plugin;

pub use config::{PluginSpec, SelectionPolicy, TrainConfig};
pub use exemplar::{herding_order, ExemplarBuffer};
pub use plugin::{
    build_plugins, distillation_plugin, AugmentedLoss, DistillationPlugin, PluginContext,
    PluginOutput, WeightedPlugin,
};

use crate::data::{gather_batch, Augment, ImageDataset};
use crate::error::{Error, Result};
use crate::eval::{average_incremental_accuracy, evaluate_seen, AccuracyMatrix};
use crate::model::{
    build_model, save_checkpoint, CheckpointMeta, IncrementalModel, ModelSnapshot,
    CHECKPOINT_VERSION,
};
use crate::nn::{SeedSequence, Sgd};
use crate::scenario::TaskStream;
use crate::transform::{aggss_loss_with_grad, expand_batch, TransformSet};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f32,
    /// Mean classification loss over the epoch's expanded rows.
    pub loss_aggss: f64,
    /// Weighted plugin losses by plugin name.
    pub plugin_losses: BTreeMap<String, f64>,
    /// loss_aggss plus the weighted plugin sum.
    pub loss_total: f64,
    /// Source samples drawn from the exemplar buffer this epoch.
    pub exemplar_rows: usize,
    pub total_rows: usize,
    pub teacher_queries: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskLog {
    pub task: usize,
    pub train_samples: usize,
    pub exemplar_samples: usize,
    pub epochs: Vec<EpochLog>,
}

/// Trains the model on task `task_index` of the stream.
///
/// For `task_index > 0` the model must already be grown for the task's
/// classes, and a teacher snapshot must be supplied when any plugin needs
/// one.
#[allow(clippy::too_many_arguments)]
pub fn train_task(
    model: &mut IncrementalModel,
    task_index: usize,
    stream: &TaskStream,
    ds: &ImageDataset,
    buffer: &ExemplarBuffer,
    config: &TrainConfig,
    plugins: &[WeightedPlugin],
    teacher: Option<&ModelSnapshot>,
) -> Result<TaskLog> {
    config.validate()?;
    let task = stream
        .tasks
        .get(task_index)
        .ok_or_else(|| Error::InvalidArgument(format!("task {task_index} out of range")))?;
    if task_index > 0 && teacher.is_none() && plugins.iter().any(|p| p.plugin.needs_teacher()) {
        return Err(Error::Config(
            "a plugin needs a teacher snapshot but none was captured".into(),
        ));
    }
    let ts = TransformSet::new(config.m)?;
    let k_seen = model.classes_seen();
    let new_units = task.classes.len() * config.m;
    let old_units = model.output_width() - new_units;
    // Task 0 trains on the classification loss alone; augmented losses only
    // join at incremental steps.
    let plugins: &[WeightedPlugin] = if task_index == 0 { &[] } else { plugins };
    if task_index > 0 {
        if let Some(t) = teacher {
            if t.output_width() != old_units {
                return Err(Error::Config(format!(
                    "teacher width {} does not match old-unit slice {old_units}",
                    t.output_width()
                )));
            }
        }
    }

    // Unlabeled samples are consumed only by plugins that declare support;
    // none of the built-in ones do, so the core loop trains on labels.
    let mut pool: Vec<(u32, u16, bool)> = task
        .labeled
        .iter()
        .map(|&(i, l)| (i, l, false))
        .collect();
    let exemplar_samples = if task_index > 0 {
        let replay = buffer.samples();
        pool.extend(replay.iter().map(|&(i, l)| (i, l, true)));
        replay.len()
    } else {
        0
    };

    let sgd = Sgd {
        momentum: config.momentum,
        weight_decay: config.weight_decay,
        grad_clip: config.grad_clip,
    };
    let norm = ds.normalization().clone();
    let augment = Augment::default();

    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        let slot = task_index as u64 * 104_729 + epoch as u64;
        let mut order_rng = SeedSequence::derive_slot(config.seed, 0x0EAC_0000 + slot);
        let mut aug_rng = SeedSequence::derive_slot(config.seed, 0xA060_0000 + slot);
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut order_rng);

        let teacher_queries_before = teacher.map(|t| t.query_count()).unwrap_or(0);
        let mut sum_aggss = 0f64;
        let mut sum_plugins: BTreeMap<String, f64> = BTreeMap::new();
        let mut exemplar_rows = 0usize;
        let mut total_rows = 0usize;

        for chunk in order.chunks(config.batch_size) {
            let indices: Vec<u32> = chunk.iter().map(|&i| pool[i].0).collect();
            let labels: Vec<u32> = chunk.iter().map(|&i| pool[i].1 as u32).collect();
            exemplar_rows += chunk.iter().filter(|&&i| pool[i].2).count();
            total_rows += chunk.len();

            let batch = if config.augment {
                gather_batch(&ds.train, &norm, &indices, Some((&augment, &mut aug_rng)))
            } else {
                gather_batch(&ds.train, &norm, &indices, None)
            };
            let expanded = expand_batch(&batch, &labels, k_seen, &ts)?;
            let logits = model.forward(&expanded.images, true);
            let (loss, mut dlogits) = aggss_loss_with_grad(&expanded, &logits.view())?;
            sum_aggss += loss as f64 * chunk.len() as f64;

            for wp in plugins {
                let ctx = PluginContext {
                    teacher,
                    expanded: &expanded,
                    logits: &logits,
                    old_units,
                };
                let out = wp.plugin.compute(&ctx)?;
                *sum_plugins.entry(wp.plugin.name().to_string()).or_default() +=
                    (wp.weight * out.loss) as f64 * chunk.len() as f64;
                if let Some(g) = out.grad_logits {
                    dlogits.scaled_add(wp.weight, &g);
                }
            }

            model.zero_grads();
            model.backward(&dlogits);
            sgd.step(lr, &mut |f| model.visit_params(f));
        }

        let denom = total_rows.max(1) as f64;
        let loss_aggss = sum_aggss / denom;
        let plugin_losses: BTreeMap<String, f64> = sum_plugins
            .into_iter()
            .map(|(k, v)| (k, v / denom))
            .collect();
        let loss_total = loss_aggss + plugin_losses.values().sum::<f64>();
        epochs.push(EpochLog {
            epoch,
            lr,
            loss_aggss,
            plugin_losses,
            loss_total,
            exemplar_rows,
            total_rows,
            teacher_queries: teacher.map(|t| t.query_count()).unwrap_or(0) - teacher_queries_before,
        });
    }
    model.drop_caches();
    Ok(TaskLog {
        task: task_index,
        train_samples: task.labeled.len(),
        exemplar_samples,
        epochs,
    })
}

/// Everything a finished (or aborted) experiment leaves behind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub version: u32,
    pub architecture: String,
    pub m: usize,
    pub task_class_counts: Vec<usize>,
    pub accuracy_matrix: AccuracyMatrix,
    /// Present once every task completed.
    pub average_incremental_accuracy: Option<f64>,
    pub task_logs: Vec<TaskLog>,
    pub seed: u64,
    pub completed: bool,
}

pub struct RunRecord {
    pub metrics: RunMetrics,
    pub checkpoints: Vec<PathBuf>,
}

pub const METRICS_FILE: &str = "metrics.json";

/// Runs the full incremental loop: grow, train, evaluate all seen tasks,
/// update exemplars, checkpoint. Partial metrics are persisted before an
/// error is surfaced.
pub fn run_experiment(
    ds: &ImageDataset,
    stream: &TaskStream,
    architecture: &str,
    config: &TrainConfig,
    plugin_specs: &[PluginSpec],
    out_dir: Option<&Path>,
) -> Result<RunRecord> {
    run_experiment_with(ds, stream, architecture, config, plugin_specs, out_dir, &mut |_, _| {})
}

/// [`run_experiment`] with a callback invoked after each task's evaluation
/// row is computed.
#[allow(clippy::too_many_arguments)]
pub fn run_experiment_with(
    ds: &ImageDataset,
    stream: &TaskStream,
    architecture: &str,
    config: &TrainConfig,
    plugin_specs: &[PluginSpec],
    out_dir: Option<&Path>,
    on_task: &mut dyn FnMut(usize, &[f64]),
) -> Result<RunRecord> {
    config.validate()?;
    let plugins = build_plugins(plugin_specs)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let base_classes = stream
        .tasks
        .first()
        .ok_or_else(|| Error::InvalidArgument("stream has no tasks".into()))?
        .classes
        .len();
    let mut model = build_model(architecture, config.m, base_classes, config.seed)?;
    let mut buffer = ExemplarBuffer::new(config.exemplar_budget, config.selection, config.seed);
    let mut teacher: Option<ModelSnapshot> = None;

    let mut metrics = RunMetrics {
        version: 1,
        architecture: architecture.to_string(),
        m: config.m,
        task_class_counts: stream.task_class_counts(),
        accuracy_matrix: AccuracyMatrix::new(),
        average_incremental_accuracy: None,
        task_logs: Vec::new(),
        seed: config.seed,
        completed: false,
    };
    let mut checkpoints = Vec::new();

    for t in 0..stream.tasks.len() {
        let step = (|| -> Result<()> {
            if t > 0 {
                teacher = Some(model.snapshot());
                model.grow_classifiers(stream.tasks[t].classes.len());
            }
            let log = train_task(
                &mut model,
                t,
                stream,
                ds,
                &buffer,
                config,
                &plugins,
                teacher.as_ref(),
            )?;
            metrics.task_logs.push(log);
            let row = evaluate_seen(&mut model, stream, ds, t)?;
            on_task(t, &row);
            metrics.accuracy_matrix.push_row(row)?;
            if config.exemplar_budget > 0 {
                buffer.update(&stream.tasks[t], ds, &mut model)?;
            }
            if let Some(dir) = out_dir {
                let path = dir.join(format!("task_{t:02}.ckpt"));
                save_checkpoint(&model, &checkpoint_meta(&model, stream, ds, t), &path)?;
                checkpoints.push(path);
            }
            Ok(())
        })();
        if let Err(e) = step {
            persist_metrics(&metrics, out_dir)?;
            return Err(e);
        }
        persist_metrics(&metrics, out_dir)?;
    }
    metrics.average_incremental_accuracy =
        Some(average_incremental_accuracy(&metrics.accuracy_matrix)?);
    metrics.completed = true;
    persist_metrics(&metrics, out_dir)?;
    Ok(RunRecord {
        metrics,
        checkpoints,
    })
}

fn checkpoint_meta(
    model: &IncrementalModel,
    stream: &TaskStream,
    ds: &ImageDataset,
    task_index: usize,
) -> CheckpointMeta {
    let trained = stream.total_trained_classes();
    let class_names = stream.class_order[..trained]
        .iter()
        .map(|&c| ds.class_names[c as usize].clone())
        .collect();
    CheckpointMeta {
        version: CHECKPOINT_VERSION,
        architecture: model.architecture().to_string(),
        m: model.transform_count(),
        class_counts: model.class_counts().to_vec(),
        task_index,
        seed: model.seed(),
        input_size: ds.image_size(),
        class_names,
        normalization: Some(ds.normalization().clone()),
    }
}

fn persist_metrics(metrics: &RunMetrics, out_dir: Option<&Path>) -> Result<()> {
    if let Some(dir) = out_dir {
        let json = serde_json::to_string_pretty(metrics)?;
        std::fs::write(dir.join(METRICS_FILE), json)?;
    }
    Ok(())
}

pub fn load_metrics(run_dir: impl AsRef<Path>) -> Result<RunMetrics> {
    let path = run_dir.as_ref().join(METRICS_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|_| Error::MissingPath(path.display().to_string()))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_synthetic;
    use crate::scenario::build_traditional;

    fn toy_setup() -> (crate::data::ImageDataset, TaskStream) {
        let ds = build_synthetic(6, 16, 12, 4, 5);
        let stream = build_traditional(&ds, 4, 2, 5).unwrap();
        (ds, stream)
    }

    fn fast_config(m: usize, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 16,
            learning_rate: 0.05,
            lr_milestones: vec![],
            m,
            exemplar_budget: 12,
            augment: false,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn task0_trains_and_loss_decreases() {
        let (ds, stream) = toy_setup();
        let config = fast_config(4, 3);
        let mut model = build_model("small-conv", 4, 4, config.seed).unwrap();
        let buffer = ExemplarBuffer::new(0, SelectionPolicy::Random, 1);
        let log = train_task(&mut model, 0, &stream, &ds, &buffer, &config, &[], None).unwrap();
        assert_eq!(log.epochs.len(), 3);
        assert!(
            log.epochs.last().unwrap().loss_aggss < log.epochs[0].loss_aggss,
            "loss should drop: {:?}",
            log.epochs.iter().map(|e| e.loss_aggss).collect::<Vec<_>>()
        );
        assert_eq!(log.epochs[0].teacher_queries, 0);
        assert_eq!(log.epochs[0].exemplar_rows, 0);
    }

    #[test]
    fn plugin_without_teacher_is_a_config_error() {
        let (ds, stream) = toy_setup();
        let config = fast_config(2, 1);
        let mut model = build_model("small-conv", 2, 4, config.seed).unwrap();
        model.grow_classifiers(2);
        let buffer = ExemplarBuffer::new(0, SelectionPolicy::Random, 1);
        let plugins = build_plugins(&[PluginSpec {
            name: "distillation".into(),
            weight: 1.0,
            temperature: None,
        }])
        .unwrap();
        let err = train_task(
            &mut model, 1, &stream, &ds, &buffer, &config, &plugins, None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn zero_weight_plugins_do_not_change_the_trajectory() {
        let (ds, stream) = toy_setup();
        let config = fast_config(2, 2);
        let buffer = ExemplarBuffer::new(0, SelectionPolicy::Random, 1);

        let mut plain = build_model("small-conv", 2, 4, config.seed).unwrap();
        let log_plain =
            train_task(&mut plain, 0, &stream, &ds, &buffer, &config, &[], None).unwrap();

        let mut with_zero = build_model("small-conv", 2, 4, config.seed).unwrap();
        let plugins = build_plugins(&[PluginSpec {
            name: "distillation".into(),
            weight: 0.0,
            temperature: Some(2.0),
        }])
        .unwrap();
        let teacher = with_zero.snapshot();
        let log_zero = train_task(
            &mut with_zero,
            0,
            &stream,
            &ds,
            &buffer,
            &config,
            &plugins,
            Some(&teacher),
        )
        .unwrap();

        for (a, b) in log_plain.epochs.iter().zip(&log_zero.epochs) {
            assert_eq!(a.loss_aggss, b.loss_aggss, "trajectories diverged");
        }
        // Task 0 never touches distillation machinery.
        assert_eq!(teacher.query_count(), 0);
        let x = crate::data::gather_batch(
            &ds.train,
            ds.normalization(),
            &[0, 1, 2],
            None,
        );
        assert_eq!(plain.forward(&x, false), with_zero.forward(&x, false));
    }

    #[test]
    fn epoch_logs_reconcile_loss_components() {
        let (ds, stream) = toy_setup();
        let config = fast_config(2, 1);
        let mut model = build_model("small-conv", 2, 4, config.seed).unwrap();
        let teacher = model.snapshot();
        model.grow_classifiers(2);
        let mut buffer = ExemplarBuffer::new(12, SelectionPolicy::Random, 1);
        buffer.update(&stream.tasks[0], &ds, &mut model).unwrap();
        let plugins = build_plugins(&[PluginSpec {
            name: "distillation".into(),
            weight: 0.7,
            temperature: Some(2.0),
        }])
        .unwrap();
        let log = train_task(
            &mut model,
            1,
            &stream,
            &ds,
            &buffer,
            &config,
            &plugins,
            Some(&teacher),
        )
        .unwrap();
        let e = &log.epochs[0];
        let sum = e.loss_aggss + e.plugin_losses.values().sum::<f64>();
        assert!((sum - e.loss_total).abs() < 1e-9);
        assert!(e.plugin_losses.contains_key("distillation"));
        assert!(e.teacher_queries > 0);
        assert!(e.exemplar_rows > 0);
    }

    #[test]
    fn replay_fraction_matches_pool_composition() {
        let (ds, stream) = toy_setup();
        let mut config = fast_config(1, 1);
        config.exemplar_budget = 8;
        let mut model = build_model("small-conv", 1, 4, config.seed).unwrap();
        let mut buffer = ExemplarBuffer::new(8, SelectionPolicy::Random, 1);
        buffer.update(&stream.tasks[0], &ds, &mut model).unwrap();
        model.grow_classifiers(2);
        let log = train_task(
            &mut model,
            1,
            &stream,
            &ds,
            &buffer,
            &config,
            &[],
            None,
        )
        .unwrap();
        let e = &log.epochs[0];
        // Every pool sample appears exactly once per epoch.
        assert_eq!(e.total_rows, stream.tasks[1].labeled.len() + buffer.len());
        assert_eq!(e.exemplar_rows, buffer.len());
    }

    #[test]
    fn run_experiment_single_task_stream() {
        let ds = build_synthetic(4, 16, 10, 4, 6);
        let stream = build_traditional(&ds, 4, 0, 6).unwrap();
        let config = TrainConfig {
            epochs: 2,
            batch_size: 8,
            learning_rate: 0.05,
            lr_milestones: vec![],
            m: 1,
            exemplar_budget: 0,
            augment: false,
            seed: 3,
            ..Default::default()
        };
        let record = run_experiment(&ds, &stream, "small-conv", &config, &[], None).unwrap();
        assert_eq!(record.metrics.accuracy_matrix.tasks(), 1);
        assert!(record.metrics.completed);
        assert!(record.metrics.average_incremental_accuracy.is_some());
    }
}
