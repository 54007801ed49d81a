//! Backbone registry: feature extractors mapping image batches to vectors.

use crate::error::{Error, Result};
use crate::nn::{
    BatchNorm2d, Conv2d, GlobalAvgPool, MaxPool2, Param, Relu, ResidualBlock, SeedSequence,
    Sequential,
};
use ndarray::{Array2, Array4, ArrayD, Axis};

pub const ARCHITECTURES: [&str; 3] = ["small-conv", "resnet-32-like", "resnet-18-like"];

/// A named layer stack ending in global average pooling.
#[derive(Clone)]
pub struct SequentialBackbone {
    seq: Sequential,
    feature_dim: usize,
    default_tap: String,
    tappable: Vec<String>,
}

impl SequentialBackbone {
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn default_tap(&self) -> &str {
        &self.default_tap
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.seq.layer_names()
    }

    pub fn tappable_layers(&self) -> &[String] {
        &self.tappable
    }

    pub fn set_tap(&mut self, name: Option<&str>) -> Result<()> {
        if let Some(n) = name {
            if !self.tappable.iter().any(|t| t == n) {
                return Err(if self.seq.layer_names().contains(&n.to_string()) {
                    Error::InvalidArgument(format!(
                        "layer `{n}` has no spatial feature map to attribute over"
                    ))
                } else {
                    Error::UnknownLayer(n.to_string())
                });
            }
        }
        self.seq.set_tap(name)
    }

    pub fn tap_activation(&self) -> Option<&Array4<f32>> {
        self.seq.tap_activation()
    }

    pub fn tap_gradient(&self) -> Option<&Array4<f32>> {
        self.seq.tap_gradient()
    }

    /// Runs the stack and flattens the pooled map to `(B, feature_dim)`.
    pub fn forward(&mut self, x: &Array4<f32>, train: bool) -> Array2<f32> {
        let out = self.seq.forward(x, train);
        let b = out.len_of(Axis(0));
        out.into_shape_with_order((b, self.feature_dim))
            .expect("pooled output reshape")
    }

    pub fn backward(&mut self, dfeat: &Array2<f32>) -> Array4<f32> {
        let (b, d) = dfeat.dim();
        let d4 = dfeat
            .clone()
            .into_shape_with_order((b, d, 1, 1))
            .expect("feature grad reshape");
        self.seq.backward(&d4)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.seq.visit_params(f);
    }

    pub fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f32>)) {
        self.seq.visit_state(f);
    }

    pub fn drop_caches(&mut self) {
        self.seq.drop_caches();
    }
}

pub fn build_backbone(architecture: &str, seeds: &mut SeedSequence) -> Result<SequentialBackbone> {
    match architecture {
        "small-conv" => Ok(small_conv(seeds)),
        "resnet-32-like" => Ok(resnet(seeds, 16, &[5, 5, 5], &[16, 32, 64])),
        "resnet-18-like" => Ok(resnet(seeds, 64, &[2, 2, 2, 2], &[64, 128, 256, 512])),
        other => Err(Error::UnknownArchitecture(other.to_string())),
    }
}

/// Four 3x3 convolutions with batch norm, three 2x2 pools, global average
/// pooling to 64 features. Sized for 32x32 desk-scale runs.
fn small_conv(seeds: &mut SeedSequence) -> SequentialBackbone {
    let mut seq = Sequential::new();
    let mut tappable = Vec::new();
    let widths = [(3usize, 16usize), (16, 32), (32, 64), (64, 64)];
    for (idx, &(cin, cout)) in widths.iter().enumerate() {
        let n = idx + 1;
        seq.push(
            format!("conv{n}"),
            Box::new(Conv2d::new(&format!("conv{n}"), cin, cout, 3, 1, 1, false, seeds)),
        );
        seq.push(format!("bn{n}"), Box::new(BatchNorm2d::new(&format!("bn{n}"), cout)));
        seq.push(format!("relu{n}"), Box::new(Relu::new()));
        tappable.extend([format!("conv{n}"), format!("bn{n}"), format!("relu{n}")]);
        if idx < 3 {
            seq.push(format!("pool{n}"), Box::new(MaxPool2::new()));
            tappable.push(format!("pool{n}"));
        }
    }
    seq.push("gap", Box::new(GlobalAvgPool::new()));
    SequentialBackbone {
        seq,
        feature_dim: 64,
        default_tap: "relu4".to_string(),
        tappable,
    }
}

/// CIFAR-style residual network: 3x3 stem, `blocks[i]` residual blocks per
/// stage at `channels[i]` width, stride 2 between stages.
fn resnet(
    seeds: &mut SeedSequence,
    stem: usize,
    blocks: &[usize],
    channels: &[usize],
) -> SequentialBackbone {
    let mut seq = Sequential::new();
    let mut tappable = Vec::new();
    seq.push(
        "stem",
        Box::new(Conv2d::new("stem", 3, stem, 3, 1, 1, false, seeds)),
    );
    seq.push("stem_bn", Box::new(BatchNorm2d::new("stem_bn", stem)));
    seq.push("stem_relu", Box::new(Relu::new()));
    tappable.extend(["stem".into(), "stem_bn".into(), "stem_relu".into()]);
    let mut in_ch = stem;
    for (si, (&n_blocks, &ch)) in blocks.iter().zip(channels).enumerate() {
        for bi in 0..n_blocks {
            let stride = if si > 0 && bi == 0 { 2 } else { 1 };
            let name = format!("s{}b{}", si + 1, bi + 1);
            seq.push(
                name.clone(),
                Box::new(ResidualBlock::new(&name, in_ch, ch, stride, seeds)),
            );
            tappable.push(name);
            in_ch = ch;
        }
    }
    seq.push("gap", Box::new(GlobalAvgPool::new()));
    let default_tap = format!("s{}b{}", blocks.len(), blocks[blocks.len() - 1]);
    SequentialBackbone {
        seq,
        feature_dim: in_ch,
        default_tap,
        tappable,
    }
}
