//! Fully connected layer over 2D feature matrices.

use super::{init, Param};
use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;

/// `y = x W^T + b` with `x: (B, in)`, `W: (out, in)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    in_features: usize,
    out_features: usize,
    cache_x: Option<Array2<f32>>,
}

impl Linear {
    /// Classifier-style initialization: U(-1/sqrt(in), 1/sqrt(in)) for both
    /// weight and bias.
    pub fn new(name: &str, in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = Param::new(
            format!("{name}.weight"),
            init::scaled_uniform(&[out_features, in_features], in_features, rng),
        );
        let bias = Param::new(
            format!("{name}.bias"),
            init::scaled_uniform(&[out_features], in_features, rng),
        );
        Self {
            weight,
            bias,
            in_features,
            out_features,
            cache_x: None,
        }
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    fn weight2d(&self) -> ArrayView2<'_, f32> {
        self.weight
            .value
            .view()
            .into_dimensionality()
            .expect("linear weight is 2d")
    }

    pub fn forward(&mut self, x: &Array2<f32>, keep_cache: bool) -> Array2<f32> {
        let mut out = Array2::<f32>::zeros((x.nrows(), self.out_features));
        general_mat_mul(1.0, x, &self.weight2d().t(), 0.0, &mut out);
        let bias = self.bias.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        for mut row in out.outer_iter_mut() {
            row += &bias;
        }
        self.cache_x = keep_cache.then(|| x.clone());
        out
    }

    /// Accumulates parameter gradients and returns d(loss)/dx.
    pub fn backward(&mut self, grad_out: &Array2<f32>) -> Array2<f32> {
        let x = self.cache_x.take().expect("linear backward before forward");
        {
            let mut wgrad = self
                .weight
                .grad
                .view_mut()
                .into_dimensionality::<ndarray::Ix2>()
                .unwrap();
            general_mat_mul(1.0, &grad_out.t(), &x.view(), 1.0, &mut wgrad);
            let mut bgrad = self
                .bias
                .grad
                .view_mut()
                .into_dimensionality::<ndarray::Ix1>()
                .unwrap();
            for row in grad_out.outer_iter() {
                bgrad += &row;
            }
        }
        let mut dx = Array2::<f32>::zeros(x.raw_dim());
        general_mat_mul(1.0, grad_out, &self.weight2d(), 0.0, &mut dx);
        dx
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }

    pub fn drop_caches(&mut self) {
        self.cache_x = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, ArrayD};

    #[test]
    fn forward_and_backward_small_case() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut lin = Linear::new("fc", 2, 2, &mut rng);
        lin.weight.value = ArrayD::from_shape_vec(vec![2, 2], vec![1., 2., 3., 4.]).unwrap();
        lin.bias.value = ArrayD::from_shape_vec(vec![2], vec![0.5, -0.5]).unwrap();
        let x = array![[1.0f32, 1.0]];
        let y = lin.forward(&x, true);
        assert_eq!(y, array![[3.5, 6.5]]);
        let dy = array![[1.0f32, 1.0]];
        let dx = lin.backward(&dy);
        assert_eq!(dx, array![[4.0, 6.0]]);
        assert_eq!(
            lin.weight.grad,
            ArrayD::from_shape_vec(vec![2, 2], vec![1., 1., 1., 1.]).unwrap()
        );
        assert_eq!(lin.bias.grad, ArrayD::from_shape_vec(vec![2], vec![1., 1.]).unwrap());
    }
}
