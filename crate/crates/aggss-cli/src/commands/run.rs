//! `aggss run`: execute a full incremental experiment.

use crate::config::ExperimentConfig;
use aggss_core::scenario::export_manifest;
use aggss_core::trainer::run_experiment_with;
use aggss_core::{Error, Result};
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
struct EnvRecord {
    seed: u64,
    tool_version: String,
    threads: usize,
    dataset: String,
    elapsed_seconds: f64,
}

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
    std::fs::write(out_dir.join("resolved_config.toml"), config.to_toml()?)?;

    println!(
        "run `{}`: {} tasks on {} ({} train / {} test), arch {}, M={}",
        config.display_name(),
        stream.tasks.len(),
        ds.name,
        ds.train.len(),
        ds.test.len(),
        config.model.architecture,
        config.train.m,
    );
    let started = std::time::Instant::now();
    let record = run_experiment_with(
        &ds,
        &stream,
        &config.model.architecture,
        &config.train,
        &config.plugins,
        Some(out_dir),
        &mut |t, row| {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:6.2}")).collect();
            println!("task {t}: acc row [{}]", cells.join(" "));
        },
    )?;

    let aia = record
        .metrics
        .average_incremental_accuracy
        .expect("completed run has AIA");
    println!("average incremental accuracy: {aia:.2}%");

    let env = EnvRecord {
        seed: config.train.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        dataset: ds.name.clone(),
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    std::fs::write(
        out_dir.join("env.json"),
        serde_json::to_string_pretty(&env)?,
    )?;
    Ok(())
}
