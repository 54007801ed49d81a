//! 2D convolution via im2col and GEMM, parallelized over the batch.

use super::{init, Layer, Param, SeedSequence};
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array4, ArrayD, ArrayView2, Axis};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Param,
    bias: Option<Param>,
    in_ch: usize,
    out_ch: usize,
    k: usize,
    stride: usize,
    pad: usize,
    cache_x: Option<Array4<f32>>,
}

impl Conv2d {
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        with_bias: bool,
        seeds: &mut SeedSequence,
    ) -> Self {
        let fan_in = in_ch * k * k;
        let mut rng = seeds.derive();
        let weight = Param::new(
            format!("{name}.weight"),
            init::kaiming_uniform(&[out_ch, fan_in], fan_in, &mut rng),
        );
        let bias = with_bias.then(|| Param::new(format!("{name}.bias"), ArrayD::zeros(vec![out_ch])));
        Self {
            weight,
            bias,
            in_ch,
            out_ch,
            k,
            stride,
            pad,
            cache_x: None,
        }
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    fn weight2d(&self) -> ArrayView2<'_, f32> {
        self.weight
            .value
            .view()
            .into_dimensionality()
            .expect("conv weight is 2d")
    }
}

/// Unpacks one CHW image into a `(c*k*k, oh*ow)` patch matrix stored in the
/// row-major buffer `col`.
#[allow(clippy::too_many_arguments)]
fn im2col_into(
    x: &[f32],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    col: &mut [f32],
) {
    for ci in 0..c_in {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                for oi in 0..oh {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    let dst = &mut col[row * oh * ow + oi * ow..row * oh * ow + (oi + 1) * ow];
                    if ii < 0 || ii >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[(ii as usize) * w..(ii as usize) * w + w];
                    if stride == 1 {
                        let shift = kj as isize - pad as isize;
                        let j0 = (-shift).max(0) as usize;
                        let j1 = ((w as isize - shift).clamp(0, ow as isize)) as usize;
                        dst[..j0.min(ow)].fill(0.0);
                        if j1 > j0 {
                            let s0 = (j0 as isize + shift) as usize;
                            dst[j0..j1].copy_from_slice(&src[s0..s0 + (j1 - j0)]);
                        }
                        if j1 < ow {
                            dst[j1..].fill(0.0);
                        }
                    } else {
                        for (oj, d) in dst.iter_mut().enumerate() {
                            let jj = (oj * stride + kj) as isize - pad as isize;
                            *d = if jj >= 0 && (jj as usize) < w {
                                src[jj as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds a patch-matrix gradient back onto the CHW input gradient.
#[allow(clippy::too_many_arguments)]
fn col2im_add(
    dcol: &[f32],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    dx: &mut [f32],
) {
    for ci in 0..c_in {
        let plane_off = ci * h * w;
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                for oi in 0..oh {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    let src = &dcol[row * oh * ow + oi * ow..row * oh * ow + (oi + 1) * ow];
                    let dst_row = plane_off + (ii as usize) * w;
                    for (oj, &v) in src.iter().enumerate() {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj >= 0 && (jj as usize) < w {
                            dx[dst_row + jj as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Batch chunk length targeting a modest per-thread col buffer.
fn chunk_len(batch: usize, ckk: usize, ohw: usize) -> usize {
    let per_image = ckk * ohw * 4;
    let budget = 8 << 20;
    (budget / per_image.max(1)).clamp(1, batch.max(1))
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &Array4<f32>, _train: bool) -> Array4<f32> {
        let (b, c_in, h, w) = x.dim();
        assert_eq!(c_in, self.in_ch, "conv input channels");
        let (oh, ow) = self.out_hw(h, w);
        self.cache_x = Some(x.clone());
        let ckk = self.in_ch * self.k * self.k;
        let mut out = Array4::<f32>::zeros((b, self.out_ch, oh, ow));
        let w2d = self.weight2d();
        let chunk = chunk_len(b, ckk, oh * ow);

        let out_chunks: Vec<_> = out.axis_chunks_iter_mut(Axis(0), chunk).collect();
        let x_chunks: Vec<_> = x.axis_chunks_iter(Axis(0), chunk).collect();
        out_chunks
            .into_par_iter()
            .zip(x_chunks)
            .for_each(|(mut oc, xc)| {
                let n = xc.len_of(Axis(0));
                let mut col = vec![0f32; ckk * oh * ow];
                for i in 0..n {
                    let xi = xc.index_axis(Axis(0), i);
                    im2col_into(
                        xi.as_slice().expect("contiguous input"),
                        c_in,
                        h,
                        w,
                        self.k,
                        self.stride,
                        self.pad,
                        oh,
                        ow,
                        &mut col,
                    );
                    let col_m =
                        ArrayView2::from_shape((ckk, oh * ow), &col).expect("col shape");
                    let mut oi = oc.index_axis_mut(Axis(0), i);
                    let mut oi2 = oi
                        .view_mut()
                        .into_shape_with_order((self.out_ch, oh * ow))
                        .expect("output reshape");
                    general_mat_mul(1.0, &w2d, &col_m, 0.0, &mut oi2);
                }
            });

        if let Some(bias) = &self.bias {
            let bv = bias.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
            out.axis_iter_mut(Axis(0))
                .collect::<Vec<_>>()
                .into_par_iter()
                .for_each(|mut img| {
                    for (co, mut plane) in img.axis_iter_mut(Axis(0)).enumerate() {
                        plane += bv[co];
                    }
                });
        }
        out
    }

    fn backward(&mut self, grad_out: &Array4<f32>) -> Array4<f32> {
        let x = self.cache_x.take().expect("conv backward before forward");
        let (b, c_in, h, w) = x.dim();
        let (_, _, oh, ow) = grad_out.dim();
        let ckk = self.in_ch * self.k * self.k;
        let chunk = chunk_len(b, ckk, oh * ow);
        let w2d = self.weight2d();

        let mut dx = Array4::<f32>::zeros((b, c_in, h, w));
        let dx_chunks: Vec<_> = dx.axis_chunks_iter_mut(Axis(0), chunk).collect();
        let x_chunks: Vec<_> = x.axis_chunks_iter(Axis(0), chunk).collect();
        let dy_chunks: Vec<_> = grad_out.axis_chunks_iter(Axis(0), chunk).collect();

        // Per-chunk weight/bias gradient partials, reduced in chunk order.
        let partials: Vec<(Array2<f32>, Array1<f32>)> = dx_chunks
            .into_par_iter()
            .zip(x_chunks)
            .zip(dy_chunks)
            .map(|((mut dxc, xc), dyc)| {
                let n = xc.len_of(Axis(0));
                let mut col = vec![0f32; ckk * oh * ow];
                let mut dcol = Array2::<f32>::zeros((ckk, oh * ow));
                let mut dw = Array2::<f32>::zeros((self.out_ch, ckk));
                let mut db = Array1::<f32>::zeros(self.out_ch);
                for i in 0..n {
                    let xi = xc.index_axis(Axis(0), i);
                    im2col_into(
                        xi.as_slice().expect("contiguous input"),
                        c_in,
                        h,
                        w,
                        self.k,
                        self.stride,
                        self.pad,
                        oh,
                        ow,
                        &mut col,
                    );
                    let col_m =
                        ArrayView2::from_shape((ckk, oh * ow), &col).expect("col shape");
                    let dyi = dyc.index_axis(Axis(0), i);
                    let dyi2 = dyi
                        .into_shape_with_order((self.out_ch, oh * ow))
                        .expect("grad reshape");
                    general_mat_mul(1.0, &dyi2, &col_m.t(), 1.0, &mut dw);
                    for (co, row) in dyi2.outer_iter().enumerate() {
                        db[co] += row.sum();
                    }
                    general_mat_mul(1.0, &w2d.t(), &dyi2, 0.0, &mut dcol);
                    let mut dxi = dxc.index_axis_mut(Axis(0), i);
                    col2im_add(
                        dcol.as_slice().expect("contiguous dcol"),
                        c_in,
                        h,
                        w,
                        self.k,
                        self.stride,
                        self.pad,
                        oh,
                        ow,
                        dxi.as_slice_mut().expect("contiguous dx"),
                    );
                }
                (dw, db)
            })
            .collect();

        let mut wgrad = self
            .weight
            .grad
            .view_mut()
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap();
        for (dw, db) in partials {
            wgrad += &dw;
            if let Some(bias) = &mut self.bias {
                let mut bg = bias.grad.view_mut().into_dimensionality::<ndarray::Ix1>().unwrap();
                bg += &db;
            }
        }
        dx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }

    fn drop_caches(&mut self) {
        self.cache_x = None;
    }

    fn clone_box(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Naive direct convolution used as the reference.
    fn conv_oracle(
        x: &Array4<f32>,
        w: &Array2<f32>,
        in_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Array4<f32> {
        let (b, _, h, wd) = x.dim();
        let out_ch = w.nrows();
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut out = Array4::<f32>::zeros((b, out_ch, oh, ow));
        for bi in 0..b {
            for co in 0..out_ch {
                for oi in 0..oh {
                    for oj in 0..ow {
                        let mut acc = 0f32;
                        for ci in 0..in_ch {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let ii = (oi * stride + ki) as isize - pad as isize;
                                    let jj = (oj * stride + kj) as isize - pad as isize;
                                    if ii >= 0
                                        && jj >= 0
                                        && (ii as usize) < h
                                        && (jj as usize) < wd
                                    {
                                        acc += x[[bi, ci, ii as usize, jj as usize]]
                                            * w[[co, (ci * k + ki) * k + kj]];
                                    }
                                }
                            }
                        }
                        out[[bi, co, oi, oj]] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(in_ch, out_ch, k, stride, pad, h) in
            &[(3usize, 4usize, 3usize, 1usize, 1usize, 8usize), (2, 3, 3, 2, 1, 9), (1, 2, 1, 1, 0, 5)]
        {
            let mut seeds = SeedSequence::new(1);
            let mut conv = Conv2d::new("c", in_ch, out_ch, k, stride, pad, false, &mut seeds);
            let x = Array4::from_shape_fn((3, in_ch, h, h), |_| rng.gen_range(-1.0f32..1.0));
            let got = conv.forward(&x, true);
            let w2 = conv.weight2d().to_owned();
            let want = conv_oracle(&x, &w2, in_ch, k, stride, pad);
            let max = got
                .iter()
                .zip(want.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0f32, f32::max);
            assert!(max < 1e-4, "conv mismatch {max} for k={k} s={stride}");
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut seeds = SeedSequence::new(3);
        let mut conv = Conv2d::new("c", 2, 3, 3, 1, 1, true, &mut seeds);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array4::from_shape_fn((2, 2, 5, 5), |_| rng.gen_range(-1.0f32..1.0));
        let dy_seed = Array4::from_shape_fn((2, 3, 5, 5), |_| rng.gen_range(-1.0f32..1.0));

        let scalar = |conv: &mut Conv2d, x: &Array4<f32>| -> f64 {
            let y = conv.forward(x, true);
            y.iter()
                .zip(dy_seed.iter())
                .map(|(a, b)| (*a as f64) * (*b as f64))
                .sum()
        };

        let _ = conv.forward(&x, true);
        let dx = conv.backward(&dy_seed);

        // d(scalar)/dx via central differences on a few entries.
        let mut x_mut = x.clone();
        let h = 1e-3f32;
        for &(b, c, i, j) in &[(0usize, 0usize, 0usize, 0usize), (1, 1, 2, 3), (0, 1, 4, 4)] {
            let orig = x_mut[[b, c, i, j]];
            x_mut[[b, c, i, j]] = orig + h;
            let up = scalar(&mut conv, &x_mut);
            x_mut[[b, c, i, j]] = orig - h;
            let down = scalar(&mut conv, &x_mut);
            x_mut[[b, c, i, j]] = orig;
            let fd = ((up - down) / (2.0 * h as f64)) as f32;
            assert!(
                (fd - dx[[b, c, i, j]]).abs() < 1e-2,
                "dx mismatch at ({b},{c},{i},{j}): fd={fd} got={}",
                dx[[b, c, i, j]]
            );
        }

        // dW via finite differences on a few weight entries.
        let _ = conv.forward(&x, true);
        conv.visit_params(&mut |p| p.grad.fill(0.0));
        let _ = conv.backward(&dy_seed);
        let mut grads = Vec::new();
        conv.visit_params(&mut |p| grads.push((p.name.clone(), p.grad.clone())));
        let wgrad = &grads[0].1;
        for &(r, c) in &[(0usize, 0usize), (2, 17), (1, 9)] {
            let orig = conv.weight.value[[r, c]];
            conv.weight.value[[r, c]] = orig + h;
            let up = scalar(&mut conv, &x);
            conv.weight.value[[r, c]] = orig - h;
            let down = scalar(&mut conv, &x);
            conv.weight.value[[r, c]] = orig;
            let fd = ((up - down) / (2.0 * h as f64)) as f32;
            assert!(
                (fd - wgrad[[r, c]]).abs() < 1e-2,
                "dW mismatch at ({r},{c}): fd={fd} got={}",
                wgrad[[r, c]]
            );
        }
    }
}
