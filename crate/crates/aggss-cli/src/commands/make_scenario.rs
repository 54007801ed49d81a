//! `aggss make-scenario`: build a task stream, export its manifest, and
//! plot the per-class data distribution (hatched segments mark unlabeled
//! pools, grouped and colored by task).

use crate::config::ExperimentConfig;
use aggss_core::data::ImageDataset;
use aggss_core::report::{svg_class_bars, ClassBar};
use aggss_core::scenario::{export_manifest, TaskStream};
use aggss_core::{Error, Result};
use std::path::Path;

pub fn execute(config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(s) = seed {
        config.seed = Some(s);
        config.train.seed = s;
    }
    if let Some(dir) = out {
        config.output.dir = Some(dir.display().to_string());
    }
    let out_dir = config
        .output
        .dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory (set [output].dir or --out)".into()))?;
    let out_dir = Path::new(&out_dir);
    std::fs::create_dir_all(out_dir)?;

    let ds = config.dataset.load()?;
    let stream = config.build_stream(&ds)?;
    export_manifest(&stream, &ds, out_dir.join("manifest.json"))?;

    let (bars, groups) = distribution_bars(&stream, &ds);
    svg_class_bars(
        &format!(
            "{} on {}: per-class data distribution",
            config.scenario.kind, ds.name
        ),
        &bars,
        &groups,
        &out_dir.join("distribution.svg"),
    )?;

    for warning in &stream.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "scenario `{}`: {} tasks, splits {:?}, {} outlier classes",
        config.scenario.kind,
        stream.tasks.len(),
        stream.splits,
        stream.outlier_classes.len()
    );
    println!("manifest + distribution plot written to {}", out_dir.display());
    Ok(())
}

/// One bar per stream class: solid = labeled count, hatched = unlabeled
/// samples of that class across pools. Outlier classes form a final group.
fn distribution_bars(stream: &TaskStream, ds: &ImageDataset) -> (Vec<ClassBar>, Vec<String>) {
    let mut unlabeled_by_class = vec![0usize; ds.num_classes()];
    for task in &stream.tasks {
        for &idx in &task.unlabeled {
            unlabeled_by_class[ds.train.labels[idx as usize] as usize] += 1;
        }
    }
    let mut bars = Vec::new();
    for (t, task) in stream.tasks.iter().enumerate() {
        for (pos, &orig) in task.classes.iter().enumerate() {
            bars.push(ClassBar {
                solid: task.class_counts[pos] as f64,
                hatched: unlabeled_by_class[orig as usize] as f64,
                group: t,
            });
        }
    }
    let mut groups: Vec<String> = (0..stream.tasks.len()).map(|t| format!("task {t}")).collect();
    if !stream.outlier_classes.is_empty() {
        let group = stream.tasks.len();
        for &orig in &stream.outlier_classes {
            bars.push(ClassBar {
                solid: 0.0,
                hatched: unlabeled_by_class[orig as usize] as f64,
                group,
            });
        }
        groups.push("outliers".into());
    }
    (bars, groups)
}
