//! Basic residual block: two 3x3 convolutions with a skip connection.

use super::{BatchNorm2d, Conv2d, Layer, Param, Relu, SeedSequence};
use ndarray::{Array4, ArrayD};

#[derive(Clone)]
pub struct ResidualBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    relu1: Relu,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    shortcut: Option<(Conv2d, BatchNorm2d)>,
    out_mask: Option<Array4<f32>>,
}

impl ResidualBlock {
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        stride: usize,
        seeds: &mut SeedSequence,
    ) -> Self {
        let conv1 = Conv2d::new(&format!("{name}.conv1"), in_ch, out_ch, 3, stride, 1, false, seeds);
        let bn1 = BatchNorm2d::new(&format!("{name}.bn1"), out_ch);
        let conv2 = Conv2d::new(&format!("{name}.conv2"), out_ch, out_ch, 3, 1, 1, false, seeds);
        let bn2 = BatchNorm2d::new(&format!("{name}.bn2"), out_ch);
        let shortcut = (stride != 1 || in_ch != out_ch).then(|| {
            (
                Conv2d::new(&format!("{name}.down"), in_ch, out_ch, 1, stride, 0, false, seeds),
                BatchNorm2d::new(&format!("{name}.down_bn"), out_ch),
            )
        });
        Self {
            conv1,
            bn1,
            relu1: Relu::new(),
            conv2,
            bn2,
            shortcut,
            out_mask: None,
        }
    }
}

impl Layer for ResidualBlock {
    fn forward(&mut self, x: &Array4<f32>, train: bool) -> Array4<f32> {
        let main = self.conv1.forward(x, train);
        let main = self.bn1.forward(&main, train);
        let main = self.relu1.forward(&main, train);
        let main = self.conv2.forward(&main, train);
        let main = self.bn2.forward(&main, train);
        let skip = match &mut self.shortcut {
            Some((conv, bn)) => {
                let s = conv.forward(x, train);
                bn.forward(&s, train)
            }
            None => x.clone(),
        };
        let mut out = main + skip;
        let mask = out.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        out.mapv_inplace(|v| v.max(0.0));
        self.out_mask = Some(mask);
        out
    }

    fn backward(&mut self, grad_out: &Array4<f32>) -> Array4<f32> {
        let mask = self.out_mask.take().expect("block backward before forward");
        let d_add = grad_out * &mask;
        let d = self.bn2.backward(&d_add);
        let d = self.conv2.backward(&d);
        let d = self.relu1.backward(&d);
        let d = self.bn1.backward(&d);
        let d_main = self.conv1.backward(&d);
        let d_skip = match &mut self.shortcut {
            Some((conv, bn)) => {
                let s = bn.backward(&d_add);
                conv.backward(&s)
            }
            None => d_add,
        };
        d_main + d_skip
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv1.visit_params(f);
        self.bn1.visit_params(f);
        self.conv2.visit_params(f);
        self.bn2.visit_params(f);
        if let Some((conv, bn)) = &mut self.shortcut {
            conv.visit_params(f);
            bn.visit_params(f);
        }
    }

    fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f32>)) {
        self.conv1.visit_state(f);
        self.bn1.visit_state(f);
        self.conv2.visit_state(f);
        self.bn2.visit_state(f);
        if let Some((conv, bn)) = &mut self.shortcut {
            conv.visit_state(f);
            bn.visit_state(f);
        }
    }

    fn drop_caches(&mut self) {
        self.conv1.drop_caches();
        self.bn1.drop_caches();
        self.relu1.drop_caches();
        self.conv2.drop_caches();
        self.bn2.drop_caches();
        if let Some((conv, bn)) = &mut self.shortcut {
            conv.drop_caches();
            bn.drop_caches();
        }
        self.out_mask = None;
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}
