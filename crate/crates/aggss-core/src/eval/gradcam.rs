//! Gradient-weighted class activation maps over the rotation set.
//!
//! For each transform `r` the rotated image is forwarded, the score of
//! output unit `class*M + r` is backpropagated to a tapped convolutional
//! layer, channels are weighted by their spatially pooled gradients, and
//! the rectified weighted sum is normalized to [0,1].

use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::model::IncrementalModel;
use crate::transform::{aggregate_inference, TransformSet};
use ndarray::{Array2, Array3, Array4, Axis};

#[derive(Debug, Clone, Copy)]
pub enum GradCamTarget {
    /// Use the rotation-aggregated prediction as the target class.
    Predicted,
    Class(usize),
}

#[derive(Debug, Clone)]
pub struct AttentionMap {
    /// One map per transform, values in [0,1] (all-zero when the raw map
    /// vanishes), shaped like the tapped layer's spatial extent.
    pub maps: Vec<Array2<f32>>,
    /// Per-rotation predicted real class (diagonal logit argmax).
    pub rotation_predictions: Vec<usize>,
    pub aggregated_prediction: usize,
    pub target_class: usize,
    pub layer: String,
}

/// Computes attention maps for a single normalized CHW image.
pub fn gradcam(
    model: &mut IncrementalModel,
    image: &Array3<f32>,
    target: GradCamTarget,
    layer: Option<&str>,
) -> Result<AttentionMap> {
    let m = model.transform_count();
    let k_seen = model.classes_seen();
    let ts = TransformSet::new(m)?;
    let layer_name = layer.unwrap_or(model.default_tap()).to_string();
    model.set_tap(Some(&layer_name))?;

    let (c, h, w) = image.dim();
    let mut rotated = Array4::<f32>::zeros((m, c, h, w));
    for r in 0..m {
        rotated
            .index_axis_mut(Axis(0), r)
            .assign(&ts.apply(image.view(), r)?);
    }

    let logits = model.forward(&rotated, false);
    let agg = aggregate_inference(&logits.view(), m)?;
    // Rows of `logits` form one expanded item, so aggregation yields one row.
    let aggregated_prediction = agg.predictions()[0];
    let rotation_predictions: Vec<usize> = (0..m)
        .map(|r| {
            (0..k_seen)
                .max_by(|&a, &b| {
                    logits[[r, a * m + r]]
                        .partial_cmp(&logits[[r, b * m + r]])
                        .expect("finite logits")
                })
                .unwrap_or(0)
        })
        .collect();
    let target_class = match target {
        GradCamTarget::Predicted => aggregated_prediction,
        GradCamTarget::Class(c) => {
            if c >= k_seen {
                return Err(Error::InvalidArgument(format!(
                    "target class {c} out of range for {k_seen} seen classes"
                )));
            }
            c
        }
    };

    let mut dlogits = Array2::<f32>::zeros(logits.raw_dim());
    for r in 0..m {
        dlogits[[r, target_class * m + r]] = 1.0;
    }
    model.zero_grads();
    model.backward(&dlogits);

    let activation = model
        .tap_activation()
        .ok_or_else(|| Error::UnknownLayer(layer_name.clone()))?
        .clone();
    let gradient = model
        .tap_gradient()
        .ok_or_else(|| Error::UnknownLayer(layer_name.clone()))?
        .clone();
    model.zero_grads();
    model.drop_caches();
    model.set_tap(None)?;

    let (_, channels, fh, fw) = activation.dim();
    let mut maps = Vec::with_capacity(m);
    for r in 0..m {
        let mut map = Array2::<f32>::zeros((fh, fw));
        for k in 0..channels {
            let grad_plane = gradient.index_axis(Axis(0), r);
            let grad_plane = grad_plane.index_axis(Axis(0), k);
            let weight: f32 = grad_plane.sum() / (fh * fw) as f32;
            let act_plane = activation.index_axis(Axis(0), r);
            let act_plane = act_plane.index_axis(Axis(0), k);
            map.scaled_add(weight, &act_plane);
        }
        map.mapv_inplace(|v| v.max(0.0));
        let max = map.iter().copied().fold(0f32, f32::max);
        if max > 0.0 {
            map.mapv_inplace(|v| v / max);
        }
        maps.push(map);
    }
    Ok(AttentionMap {
        maps,
        rotation_predictions,
        aggregated_prediction,
        target_class,
        layer: layer_name,
    })
}

/// Renders per-rotation heatmap overlays as RGB panels: the rotated source
/// image blended with a blue-to-red colormap of the attention map.
pub fn render_attention_grid(
    image_raw: &Array3<f32>,
    attention: &AttentionMap,
    norm: &Normalization,
) -> Result<Vec<image::RgbImage>> {
    let _ = norm;
    let (c, h, w) = image_raw.dim();
    if c != 3 {
        return Err(Error::InvalidArgument(format!(
            "attention rendering expects 3 channels, got {c}"
        )));
    }
    let m = attention.maps.len();
    let ts = TransformSet::new(m)?;
    let mut panels = Vec::with_capacity(m + 1);
    panels.push(to_rgb(image_raw, h, w));
    for (r, map) in attention.maps.iter().enumerate() {
        let rotated = ts.apply(image_raw.view(), r)?;
        let base = to_rgb(&rotated, h, w);
        let (fh, fw) = map.dim();
        let mut out = image::RgbImage::new(w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                let my = (y * fh) / h;
                let mx = (x * fw) / w;
                let a = map[[my, mx]];
                let heat = colormap(a);
                let px = base.get_pixel(x as u32, y as u32);
                let blend = |p: u8, q: u8| ((p as f32) * 0.5 + (q as f32) * 0.5) as u8;
                out.put_pixel(
                    x as u32,
                    y as u32,
                    image::Rgb([
                        blend(px[0], heat[0]),
                        blend(px[1], heat[1]),
                        blend(px[2], heat[2]),
                    ]),
                );
            }
        }
        panels.push(out);
    }
    Ok(panels)
}

fn to_rgb(img: &Array3<f32>, h: usize, w: usize) -> image::RgbImage {
    image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let at = |c: usize| (img[[c, y as usize, x as usize]].clamp(0.0, 1.0) * 255.0) as u8;
        image::Rgb([at(0), at(1), at(2)])
    })
}

/// Blue -> green -> red ramp on [0,1].
fn colormap(v: f32) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let r = (v * 2.0 - 1.0).clamp(0.0, 1.0);
    let g = 1.0 - (v * 2.0 - 1.0).abs();
    let b = (1.0 - v * 2.0).clamp(0.0, 1.0);
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}
