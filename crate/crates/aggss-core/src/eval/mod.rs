//! Evaluation: accuracy matrices, average incremental accuracy, attention
//! maps, and the rotation-count ablation.

mod ablation;
mod gradcam;

pub use ablation::rotation_ablation;
pub use gradcam::{gradcam, render_attention_grid, AttentionMap, GradCamTarget};

use crate::data::{gather_batch, ImageDataset};
use crate::error::{Error, Result};
use crate::model::IncrementalModel;
use crate::scenario::TaskStream;
use crate::transform::{aggregate_inference, expand_batch, TransformSet};
use serde::{Deserialize, Serialize};

/// Lower-triangular accuracy records: `get(t, n)` is the accuracy (percent)
/// on the union of test sets of tasks `0..=n`, measured after task `t`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.rows.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "row {} must have {} entries, got {}",
                self.rows.len(),
                self.rows.len() + 1,
                row.len()
            )));
        }
        if row.iter().any(|&v| !(0.0..=100.0).contains(&v)) {
            return Err(Error::InvalidArgument(
                "accuracy entries must lie in [0, 100]".into(),
            ));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Number of evaluated checkpoints (tasks completed).
    pub fn tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, t: usize, n: usize) -> Option<f64> {
        self.rows.get(t).and_then(|r| r.get(n)).copied()
    }

    pub fn row(&self, t: usize) -> Option<&[f64]> {
        self.rows.get(t).map(|r| r.as_slice())
    }

    /// `Acc^t_{0:t}` for each `t`.
    pub fn diagonal(&self) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(t, row)| row[t])
            .collect()
    }
}

/// Mean of the diagonal entries over all `T+1` checkpoints.
pub fn average_incremental_accuracy(matrix: &AccuracyMatrix) -> Result<f64> {
    if matrix.tasks() == 0 {
        return Err(Error::InvalidArgument(
            "accuracy matrix has no checkpoints".into(),
        ));
    }
    for (t, row) in matrix.rows.iter().enumerate() {
        if row.len() <= t {
            return Err(Error::InvalidArgument(format!(
                "matrix row {t} is missing its diagonal entry"
            )));
        }
    }
    let diag = matrix.diagonal();
    Ok(diag.iter().sum::<f64>() / diag.len() as f64)
}

const EVAL_BATCH: usize = 128;

/// Accuracy row after task `t`: one entry per `n <= t`, each the top-1
/// accuracy over the union of test sets of tasks `0..=n`, predicted through
/// rotation-aggregated logits over all classes seen so far.
pub fn evaluate_seen(
    model: &mut IncrementalModel,
    stream: &TaskStream,
    ds: &ImageDataset,
    t: usize,
) -> Result<Vec<f64>> {
    if t >= stream.tasks.len() {
        return Err(Error::InvalidArgument(format!(
            "task {t} out of range for {}-task stream",
            stream.tasks.len()
        )));
    }
    let m = model.transform_count();
    let ts = TransformSet::new(m)?;
    let k_seen = model.classes_seen();
    let norm = ds.normalization();

    let mut per_task: Vec<(usize, usize)> = Vec::with_capacity(t + 1);
    for n in 0..=t {
        let rows = stream.test_rows(ds, n);
        if rows.is_empty() {
            return Err(Error::Dataset(format!(
                "no test data for task {n} of the stream"
            )));
        }
        let mut correct = 0usize;
        for chunk in rows.chunks(EVAL_BATCH) {
            let indices: Vec<u32> = chunk.iter().map(|&(i, _)| i).collect();
            let labels: Vec<u32> = chunk.iter().map(|&(_, l)| l as u32).collect();
            let batch = gather_batch(&ds.test, norm, &indices, None);
            let expanded = expand_batch(&batch, &labels, k_seen, &ts)?;
            let logits = model.forward(&expanded.images, false);
            let agg = aggregate_inference(&logits.view(), m)?;
            for (pred, &(_, label)) in agg.predictions().iter().zip(chunk) {
                if *pred == label as usize {
                    correct += 1;
                }
            }
        }
        per_task.push((correct, rows.len()));
    }
    model.drop_caches();
    let mut row = Vec::with_capacity(t + 1);
    let mut correct_sum = 0usize;
    let mut total_sum = 0usize;
    for &(correct, total) in &per_task {
        correct_sum += correct;
        total_sum += total;
        row.push(100.0 * correct_sum as f64 / total_sum as f64);
    }
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_synthetic;
    use crate::model::build_model;
    use crate::scenario::build_traditional;

    #[test]
    fn aia_examples() {
        let mut m = AccuracyMatrix::new();
        m.push_row(vec![80.0]).unwrap();
        m.push_row(vec![75.0, 60.0]).unwrap();
        assert!((average_incremental_accuracy(&m).unwrap() - 70.0).abs() < 1e-9);

        let mut constant = AccuracyMatrix::new();
        for t in 0..4 {
            constant.push_row(vec![55.5; t + 1]).unwrap();
        }
        assert!((average_incremental_accuracy(&constant).unwrap() - 55.5).abs() < 1e-9);

        let mut single = AccuracyMatrix::new();
        single.push_row(vec![91.25]).unwrap();
        assert!((average_incremental_accuracy(&single).unwrap() - 91.25).abs() < 1e-9);
    }

    #[test]
    fn matrix_rejects_malformed_rows() {
        let mut m = AccuracyMatrix::new();
        assert!(m.push_row(vec![50.0, 50.0]).is_err());
        m.push_row(vec![50.0]).unwrap();
        assert!(m.push_row(vec![120.0, 3.0]).is_err());
        assert!(average_incremental_accuracy(&AccuracyMatrix::new()).is_err());
    }

    #[test]
    fn untrained_model_scores_near_chance_on_balanced_test() {
        let ds = build_synthetic(10, 16, 4, 40, 13);
        let stream = build_traditional(&ds, 10, 0, 13).unwrap();
        let mut model = build_model("small-conv", 1, 10, 13).unwrap();
        let row = evaluate_seen(&mut model, &stream, &ds, 0).unwrap();
        // Balanced test set: any label-independent predictor sits near 10%.
        assert!(row[0] > 1.0 && row[0] < 30.0, "accuracy {}", row[0]);
    }

    #[test]
    fn single_task_row_has_one_entry() {
        let ds = build_synthetic(4, 16, 6, 3, 14);
        let stream = build_traditional(&ds, 4, 0, 14).unwrap();
        let mut model = build_model("small-conv", 2, 4, 14).unwrap();
        let row = evaluate_seen(&mut model, &stream, &ds, 0).unwrap();
        assert_eq!(row.len(), 1);
        assert!((0.0..=100.0).contains(&row[0]));
    }
}
