//! Stochastic gradient descent with momentum and weight decay.

use super::Param;

#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    pub momentum: f32,
    pub weight_decay: f32,
    pub grad_clip: Option<f32>,
}

impl Sgd {
    pub fn new(momentum: f32, weight_decay: f32) -> Self {
        Self {
            momentum,
            weight_decay,
            grad_clip: None,
        }
    }

    /// One update step over every parameter the walker visits.
    ///
    /// `v = momentum*v + (g + wd*w); w -= lr*v`, with an optional global
    /// gradient-norm clip applied first.
    pub fn step(&self, lr: f32, walk: &mut dyn FnMut(&mut dyn FnMut(&mut Param))) {
        let mut scale = 1.0f32;
        if let Some(max_norm) = self.grad_clip {
            let mut sq = 0f64;
            walk(&mut |p: &mut Param| {
                for &g in p.grad.iter() {
                    sq += (g as f64) * (g as f64);
                }
            });
            let norm = sq.sqrt() as f32;
            if norm > max_norm {
                scale = max_norm / norm;
            }
        }
        let (momentum, wd) = (self.momentum, self.weight_decay);
        walk(&mut |p: &mut Param| {
            let Param {
                value,
                grad,
                velocity,
                ..
            } = p;
            for ((w, g), v) in value.iter_mut().zip(grad.iter()).zip(velocity.iter_mut()) {
                let g = g * scale + wd * *w;
                *v = momentum * *v + g;
                *w -= lr * *v;
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    #[test]
    fn momentum_accumulates_across_steps() {
        let mut p = Param::new("w", ArrayD::zeros(vec![1]));
        p.grad.fill(1.0);
        let sgd = Sgd::new(0.9, 0.0);
        sgd.step(0.1, &mut |f| f(&mut p));
        assert!((p.value[0] + 0.1).abs() < 1e-7);
        p.grad.fill(1.0);
        sgd.step(0.1, &mut |f| f(&mut p));
        // velocity = 0.9*1 + 1 = 1.9 -> w = -0.1 - 0.19
        assert!((p.value[0] + 0.29).abs() < 1e-6);
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        let mut p = Param::new("w", ArrayD::ones(vec![1]));
        let sgd = Sgd::new(0.0, 0.5);
        sgd.step(0.1, &mut |f| f(&mut p));
        assert!((p.value[0] - 0.95).abs() < 1e-7);
    }
}
