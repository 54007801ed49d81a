//! Batch normalization over the channel axis.

use super::{Layer, Param};
use ndarray::{Array4, ArrayD, Axis};

#[derive(Debug, Clone)]
struct BnCache {
    x_hat: Array4<f32>,
    inv_std: Vec<f32>,
    train: bool,
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    running_mean: ArrayD<f32>,
    running_var: ArrayD<f32>,
    mean_name: String,
    var_name: String,
    channels: usize,
    momentum: f32,
    eps: f32,
    cache: Option<BnCache>,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), ArrayD::ones(vec![channels])),
            beta: Param::new(format!("{name}.beta"), ArrayD::zeros(vec![channels])),
            running_mean: ArrayD::zeros(vec![channels]),
            running_var: ArrayD::ones(vec![channels]),
            mean_name: format!("{name}.running_mean"),
            var_name: format!("{name}.running_var"),
            channels,
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    fn channel_moments(&self, x: &Array4<f32>) -> (Vec<f64>, Vec<f64>) {
        let (b, c, h, w) = x.dim();
        let n = (b * h * w) as f64;
        let mut mean = vec![0f64; c];
        let mut var = vec![0f64; c];
        for bi in 0..b {
            for ci in 0..c {
                let plane = x.index_axis(Axis(0), bi);
                let plane = plane.index_axis(Axis(0), ci);
                let s = plane.as_slice().expect("contiguous plane");
                let mut acc = 0f64;
                for &v in s {
                    acc += v as f64;
                }
                mean[ci] += acc;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        for bi in 0..b {
            for ci in 0..c {
                let plane = x.index_axis(Axis(0), bi);
                let plane = plane.index_axis(Axis(0), ci);
                let s = plane.as_slice().expect("contiguous plane");
                let mu = mean[ci];
                let mut acc = 0f64;
                for &v in s {
                    let d = v as f64 - mu;
                    acc += d * d;
                }
                var[ci] += acc;
            }
        }
        for v in &mut var {
            *v /= n;
        }
        (mean, var)
    }
}

impl Layer for BatchNorm2d {
    fn forward(&mut self, x: &Array4<f32>, train: bool) -> Array4<f32> {
        let (b, c, h, w) = x.dim();
        assert_eq!(c, self.channels, "batchnorm channels");
        let (mean, var): (Vec<f32>, Vec<f32>) = if train {
            let (m, v) = self.channel_moments(x);
            let n = (b * h * w) as f64;
            let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            for ci in 0..c {
                self.running_mean[ci] =
                    (1.0 - self.momentum) * self.running_mean[ci] + self.momentum * m[ci] as f32;
                self.running_var[ci] = (1.0 - self.momentum) * self.running_var[ci]
                    + self.momentum * (v[ci] * unbias) as f32;
            }
            (
                m.iter().map(|&v| v as f32).collect(),
                v.iter().map(|&v| v as f32).collect(),
            )
        } else {
            (
                self.running_mean.iter().copied().collect(),
                self.running_var.iter().copied().collect(),
            )
        };
        let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()).collect();
        let gamma = &self.gamma.value;
        let beta = &self.beta.value;
        let mut x_hat = x.clone();
        let mut out = Array4::<f32>::zeros(x.raw_dim());
        for bi in 0..b {
            for ci in 0..c {
                let mut xh = x_hat.index_axis_mut(Axis(0), bi);
                let mut xh = xh.index_axis_mut(Axis(0), ci);
                let mut o = out.index_axis_mut(Axis(0), bi);
                let mut o = o.index_axis_mut(Axis(0), ci);
                let (mu, is) = (mean[ci], inv_std[ci]);
                let (g, be) = (gamma[ci], beta[ci]);
                let xs = xh.as_slice_mut().expect("contiguous");
                let os = o.as_slice_mut().expect("contiguous");
                for (xv, ov) in xs.iter_mut().zip(os.iter_mut()) {
                    *xv = (*xv - mu) * is;
                    *ov = g * *xv + be;
                }
            }
        }
        self.cache = Some(BnCache {
            x_hat,
            inv_std,
            train,
        });
        out
    }

    fn backward(&mut self, grad_out: &Array4<f32>) -> Array4<f32> {
        let cache = self.cache.take().expect("batchnorm backward before forward");
        let (b, c, h, w) = grad_out.dim();
        let gamma = &self.gamma.value;
        if !cache.train {
            // Frozen statistics: the normalization is a per-channel affine map.
            let mut dx = grad_out.clone();
            for bi in 0..b {
                for ci in 0..c {
                    let scale = gamma[ci] * cache.inv_std[ci];
                    let mut plane = dx.index_axis_mut(Axis(0), bi);
                    let mut plane = plane.index_axis_mut(Axis(0), ci);
                    plane.mapv_inplace(|v| v * scale);
                }
            }
            return dx;
        }

        let n = (b * h * w) as f64;
        let mut dgamma = vec![0f64; c];
        let mut dbeta = vec![0f64; c];
        for bi in 0..b {
            for ci in 0..c {
                let dy = grad_out.index_axis(Axis(0), bi);
                let dy = dy.index_axis(Axis(0), ci);
                let xh = cache.x_hat.index_axis(Axis(0), bi);
                let xh = xh.index_axis(Axis(0), ci);
                let dys = dy.as_slice().expect("contiguous");
                let xhs = xh.as_slice().expect("contiguous");
                let mut dg = 0f64;
                let mut db = 0f64;
                for (&d, &x) in dys.iter().zip(xhs) {
                    dg += d as f64 * x as f64;
                    db += d as f64;
                }
                dgamma[ci] += dg;
                dbeta[ci] += db;
            }
        }
        for ci in 0..c {
            self.gamma.grad[ci] += dgamma[ci] as f32;
            self.beta.grad[ci] += dbeta[ci] as f32;
        }

        let mut dx = Array4::<f32>::zeros(grad_out.raw_dim());
        for bi in 0..b {
            for ci in 0..c {
                let scale = gamma[ci] as f64 * cache.inv_std[ci] as f64 / n;
                let dg = dgamma[ci];
                let db = dbeta[ci];
                let dy = grad_out.index_axis(Axis(0), bi);
                let dy = dy.index_axis(Axis(0), ci);
                let xh = cache.x_hat.index_axis(Axis(0), bi);
                let xh = xh.index_axis(Axis(0), ci);
                let mut dxp = dx.index_axis_mut(Axis(0), bi);
                let mut dxp = dxp.index_axis_mut(Axis(0), ci);
                let dys = dy.as_slice().expect("contiguous");
                let xhs = xh.as_slice().expect("contiguous");
                let dxs = dxp.as_slice_mut().expect("contiguous");
                for ((&d, &x), o) in dys.iter().zip(xhs).zip(dxs.iter_mut()) {
                    *o = (scale * (n * d as f64 - x as f64 * dg - db)) as f32;
                }
            }
        }
        dx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f32>)) {
        {
            let Param { name, value, .. } = &mut self.gamma;
            f(name, value);
        }
        {
            let Param { name, value, .. } = &mut self.beta;
            f(name, value);
        }
        f(&self.mean_name.clone(), &mut self.running_mean);
        f(&self.var_name.clone(), &mut self.running_var);
    }

    fn drop_caches(&mut self) {
        self.cache = None;
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}
