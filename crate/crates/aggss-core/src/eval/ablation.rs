//! Rotation-count ablation: identical single-task training runs that vary
//! only the transform count M.

use crate::data::ImageDataset;
use crate::error::Result;
use crate::report::{svg_line_chart, Series};
use crate::scenario::build_traditional;
use crate::trainer::{run_experiment, TrainConfig};
use std::path::Path;

/// Trains one non-incremental model per M with the same seed and schedule;
/// returns `(M, test accuracy)` rows and optionally writes a line-plot
/// artifact `rotation_ablation.svg` into `out_dir`.
pub fn rotation_ablation(
    ds: &ImageDataset,
    architecture: &str,
    m_values: &[usize],
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<Vec<(usize, f64)>> {
    let stream = build_traditional(ds, ds.num_classes(), 0, config.seed)?;
    let mut table = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let mut cfg = config.clone();
        cfg.m = m;
        cfg.exemplar_budget = 0;
        let record = run_experiment(ds, &stream, architecture, &cfg, &[], None)?;
        let acc = record
            .metrics
            .accuracy_matrix
            .get(0, 0)
            .expect("single-task accuracy");
        table.push((m, acc));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let series = vec![Series {
            label: format!("{architecture} on {}", ds.name),
            points: table.iter().map(|&(m, a)| (m as f64, a)).collect(),
        }];
        svg_line_chart(
            "Accuracy vs transform count",
            "image transforms M",
            "accuracy (%)",
            &series,
            &dir.join("rotation_ablation.svg"),
        )?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_synthetic;

    #[test]
    fn single_m_table_matches_plain_run() {
        let ds = build_synthetic(4, 16, 8, 4, 21);
        let config = TrainConfig {
            epochs: 1,
            batch_size: 8,
            learning_rate: 0.05,
            lr_milestones: vec![],
            m: 1,
            exemplar_budget: 0,
            augment: false,
            seed: 21,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let table = rotation_ablation(&ds, "small-conv", &[1], &config, Some(dir.path())).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table[0].0, 1);

        let stream = build_traditional(&ds, 4, 0, 21).unwrap();
        let record = run_experiment(&ds, &stream, "small-conv", &config, &[], None).unwrap();
        let direct = record.metrics.accuracy_matrix.get(0, 0).unwrap();
        assert!((table[0].1 - direct).abs() < 1e-9);
        assert!(dir.path().join("rotation_ablation.svg").is_file());
    }
}
