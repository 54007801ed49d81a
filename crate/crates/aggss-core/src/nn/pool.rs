//! Spatial pooling layers.

use super::Layer;
use ndarray::{Array4, Axis};

/// 2x2 max pooling with stride 2. Odd trailing rows/columns are dropped.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    argmax: Option<Array4<u8>>,
    in_shape: Option<(usize, usize, usize, usize)>,
}

impl MaxPool2 {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for MaxPool2 {
    fn forward(&mut self, x: &Array4<f32>, _train: bool) -> Array4<f32> {
        let (b, c, h, w) = x.dim();
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Array4::<f32>::zeros((b, c, oh, ow));
        let mut arg = Array4::<u8>::zeros((b, c, oh, ow));
        for bi in 0..b {
            for ci in 0..c {
                let plane = x.index_axis(Axis(0), bi);
                let plane = plane.index_axis(Axis(0), ci);
                for oi in 0..oh {
                    for oj in 0..ow {
                        let candidates = [
                            plane[[2 * oi, 2 * oj]],
                            plane[[2 * oi, 2 * oj + 1]],
                            plane[[2 * oi + 1, 2 * oj]],
                            plane[[2 * oi + 1, 2 * oj + 1]],
                        ];
                        let mut best = 0usize;
                        for (idx, &v) in candidates.iter().enumerate().skip(1) {
                            if v > candidates[best] {
                                best = idx;
                            }
                        }
                        out[[bi, ci, oi, oj]] = candidates[best];
                        arg[[bi, ci, oi, oj]] = best as u8;
                    }
                }
            }
        }
        self.argmax = Some(arg);
        self.in_shape = Some((b, c, h, w));
        out
    }

    fn backward(&mut self, grad_out: &Array4<f32>) -> Array4<f32> {
        let arg = self.argmax.take().expect("maxpool backward before forward");
        let (b, c, h, w) = self.in_shape.take().expect("maxpool shape");
        let (_, _, oh, ow) = grad_out.dim();
        let mut dx = Array4::<f32>::zeros((b, c, h, w));
        for bi in 0..b {
            for ci in 0..c {
                for oi in 0..oh {
                    for oj in 0..ow {
                        let which = arg[[bi, ci, oi, oj]] as usize;
                        let (di, dj) = (which / 2, which % 2);
                        dx[[bi, ci, 2 * oi + di, 2 * oj + dj]] += grad_out[[bi, ci, oi, oj]];
                    }
                }
            }
        }
        dx
    }

    fn drop_caches(&mut self) {
        self.argmax = None;
        self.in_shape = None;
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

/// Global average pooling down to 1x1 spatial extent.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    in_hw: Option<(usize, usize)>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, x: &Array4<f32>, _train: bool) -> Array4<f32> {
        let (b, c, h, w) = x.dim();
        self.in_hw = Some((h, w));
        let inv = 1.0 / (h * w) as f32;
        let mut out = Array4::<f32>::zeros((b, c, 1, 1));
        for bi in 0..b {
            for ci in 0..c {
                let plane = x.index_axis(Axis(0), bi);
                let plane = plane.index_axis(Axis(0), ci);
                out[[bi, ci, 0, 0]] = plane.sum() * inv;
            }
        }
        out
    }

    fn backward(&mut self, grad_out: &Array4<f32>) -> Array4<f32> {
        let (h, w) = self.in_hw.take().expect("gap backward before forward");
        let (b, c, _, _) = grad_out.dim();
        let inv = 1.0 / (h * w) as f32;
        let mut dx = Array4::<f32>::zeros((b, c, h, w));
        for bi in 0..b {
            for ci in 0..c {
                let g = grad_out[[bi, ci, 0, 0]] * inv;
                let mut plane = dx.index_axis_mut(Axis(0), bi);
                let mut plane = plane.index_axis_mut(Axis(0), ci);
                plane.fill(g);
            }
        }
        dx
    }

    fn drop_caches(&mut self) {
        self.in_hw = None;
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let x = array![[[[1., 2.], [3., 4.]]]];
        let mut pool = MaxPool2::new();
        let y = pool.forward(&x, true);
        assert_eq!(y[[0, 0, 0, 0]], 4.0);
        let dy = array![[[[5.0f32]]]];
        let dx = pool.backward(&dy);
        assert_eq!(dx, array![[[[0., 0.], [0., 5.]]]]);
    }

    #[test]
    fn gap_averages_and_spreads() {
        let x = array![[[[1., 3.], [5., 7.]]]];
        let mut gap = GlobalAvgPool::new();
        let y = gap.forward(&x, true);
        assert_eq!(y[[0, 0, 0, 0]], 4.0);
        let dy = array![[[[8.0f32]]]];
        let dx = gap.backward(&dy);
        assert_eq!(dx, array![[[[2., 2.], [2., 2.]]]]);
    }
}
