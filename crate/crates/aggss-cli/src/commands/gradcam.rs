//! `aggss gradcam`: attention-map grids for input images.
//!
//! Each grid row holds the original image followed by one heatmap overlay
//! per transform, captioned with the per-rotation predicted class; the row
//! label carries the aggregated prediction. `--compare` adds a second
//! model's row for the same image.

use aggss_core::data::Normalization;
use aggss_core::eval::{gradcam, render_attention_grid, GradCamTarget};
use aggss_core::model::{load_checkpoint, CheckpointMeta, IncrementalModel};
use aggss_core::report::{svg_image_grid, GridPanel};
use aggss_core::{Error, Result};
use ndarray::Array3;
use std::path::Path;

pub fn execute(
    checkpoint: &Path,
    images: &[std::path::PathBuf],
    out: &Path,
    layer: Option<&str>,
    target: Option<usize>,
    compare: Option<&Path>,
) -> Result<()> {
    let (mut model, meta) = load_checkpoint(checkpoint)?;
    let mut other = compare.map(load_checkpoint).transpose()?;
    std::fs::create_dir_all(out)?;
    let target = target.map(GradCamTarget::Class).unwrap_or(GradCamTarget::Predicted);

    let mut written = 0usize;
    for path in images {
        let raw = match read_image(path, meta.input_size) {
            Ok(img) => img,
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", path.display());
                continue;
            }
        };
        let mut rows = Vec::new();
        rows.push(grid_row(&mut model, &meta, &raw, target, layer)?);
        if let Some((om, ometa)) = other.as_mut() {
            rows.push(grid_row(om, ometa, &raw, target, layer)?);
        }
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| format!("image{written}"));
        let out_path = out.join(format!("{stem}_gradcam.svg"));
        svg_image_grid(&format!("attention maps: {stem}"), &rows, &out_path)?;
        println!("wrote {}", out_path.display());
        written += 1;
    }
    if written == 0 {
        return Err(Error::InvalidArgument(
            "no readable input images".into(),
        ));
    }
    Ok(())
}

fn grid_row(
    model: &mut IncrementalModel,
    meta: &CheckpointMeta,
    raw: &Array3<f32>,
    target: GradCamTarget,
    layer: Option<&str>,
) -> Result<(String, Vec<GridPanel>)> {
    let norm = meta.normalization.clone().unwrap_or(Normalization {
        mean: vec![0.0; 3],
        std: vec![1.0; 3],
    });
    let mut normalized = raw.clone();
    for c in 0..3 {
        let (m, s) = (norm.mean[c], norm.std[c]);
        normalized
            .index_axis_mut(ndarray::Axis(0), c)
            .mapv_inplace(|v| (v - m) / s);
    }
    let attention = gradcam(model, &normalized, target, layer)?;
    let panels_rgb = render_attention_grid(raw, &attention, &norm)?;
    let class_name = |c: usize| {
        meta.class_names
            .get(c)
            .cloned()
            .unwrap_or_else(|| format!("class {c}"))
    };
    let mut panels = Vec::with_capacity(panels_rgb.len());
    for (i, image) in panels_rgb.into_iter().enumerate() {
        let caption = if i == 0 {
            "original".to_string()
        } else {
            format!(
                "rot {}: {}",
                (i - 1) * 90 % 360,
                class_name(attention.rotation_predictions[i - 1])
            )
        };
        panels.push(GridPanel { image, caption });
    }
    let label = format!(
        "{} M={} -> {}",
        meta.architecture,
        meta.m,
        class_name(attention.aggregated_prediction)
    );
    Ok((label, panels))
}

/// Loads an image file as CHW floats in [0,1] at the model's input size.
fn read_image(path: &Path, size: usize) -> Result<Array3<f32>> {
    let img = image::open(path)
        .map_err(|e| Error::Dataset(format!("{e}")))?
        .into_rgb8();
    let img = image::imageops::resize(
        &img,
        size as u32,
        size as u32,
        image::imageops::FilterType::Triangle,
    );
    let mut out = Array3::<f32>::zeros((3, size, size));
    for (x, y, pixel) in img.enumerate_pixels() {
        for c in 0..3 {
            out[[c, y as usize, x as usize]] = pixel[c] as f32 / 255.0;
        }
    }
    Ok(out)
}
