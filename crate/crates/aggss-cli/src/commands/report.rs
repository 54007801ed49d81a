//! `aggss report`: AIA comparison table and accuracy-vs-task curves.

use crate::config::ExperimentConfig;
use aggss_core::report::{svg_line_chart, Series};
use aggss_core::trainer::{load_metrics, RunMetrics};
use aggss_core::{Error, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

struct LoadedRun {
    name: String,
    dir: String,
    metrics: RunMetrics,
}

#[derive(Serialize)]
struct ReportRow {
    name: String,
    aia: f64,
    final_accuracy: f64,
    delta_vs_baseline: Option<f64>,
}

pub fn execute(runs: &[PathBuf], baseline: Option<&str>, out: Option<&Path>) -> Result<()> {
    let loaded = load_runs(runs)?;
    check_compatible(&loaded)?;

    let baseline_idx = match baseline {
        None => 0,
        Some(name) => loaded
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no run named `{name}`")))?,
    };
    let base_aia = aia(&loaded[baseline_idx])?;

    let mut rows = Vec::new();
    for (i, run) in loaded.iter().enumerate() {
        let run_aia = aia(run)?;
        let diag = run.metrics.accuracy_matrix.diagonal();
        rows.push(ReportRow {
            name: run.name.clone(),
            aia: run_aia,
            final_accuracy: *diag.last().unwrap(),
            delta_vs_baseline: (loaded.len() > 1 && i != baseline_idx)
                .then(|| run_aia - base_aia),
        });
    }

    println!(
        "{:<32} {:>8} {:>10} {:>10}",
        "method", "AIA", "final", "delta"
    );
    for row in &rows {
        let delta = row
            .delta_vs_baseline
            .map(|d| format!("{d:+.2}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<32} {:>8.2} {:>10.2} {:>10}",
            row.name, row.aia, row.final_accuracy, delta
        );
    }

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let series: Vec<Series> = loaded
            .iter()
            .map(|run| Series {
                label: run.name.clone(),
                points: run
                    .metrics
                    .accuracy_matrix
                    .diagonal()
                    .iter()
                    .enumerate()
                    .map(|(t, &a)| (t as f64, a))
                    .collect(),
            })
            .collect();
        svg_line_chart(
            "Accuracy on all seen classes",
            "task",
            "accuracy (%)",
            &series,
            &dir.join("accuracy_curves.svg"),
        )?;
        std::fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&rows)?,
        )?;
        println!("artifacts written to {}", dir.display());
    }
    Ok(())
}

fn load_runs(dirs: &[PathBuf]) -> Result<Vec<LoadedRun>> {
    dirs.iter()
        .map(|dir| {
            let metrics = load_metrics(dir)?;
            let name = match ExperimentConfig::load(dir.join("resolved_config.toml")) {
                Ok(config) => config.display_name().to_string(),
                Err(_) => dir
                    .file_name()
                    .map(|n| n.to_string_lossy().to_string())
                    .unwrap_or_else(|| dir.display().to_string()),
            };
            Ok(LoadedRun {
                name,
                dir: dir.display().to_string(),
                metrics,
            })
        })
        .collect()
}

fn aia(run: &LoadedRun) -> Result<f64> {
    run.metrics.average_incremental_accuracy.ok_or_else(|| {
        Error::InvalidArgument(format!("run `{}` did not complete (no AIA)", run.name))
    })
}

/// Refuses to merge runs over different task structures.
fn check_compatible(runs: &[LoadedRun]) -> Result<()> {
    let first = &runs[0];
    for run in &runs[1..] {
        if run.metrics.task_class_counts != first.metrics.task_class_counts {
            return Err(Error::InvalidArgument(format!(
                "incompatible scenarios: `{}` ({}) has task splits {:?}, `{}` ({}) has {:?}",
                first.name,
                first.dir,
                first.metrics.task_class_counts,
                run.name,
                run.dir,
                run.metrics.task_class_counts
            )));
        }
    }
    Ok(())
}
