use super::param::Param;
use crate::scalar::Scalar;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array4, ArrayView2, Axis};
use ndarray::parallel::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// 2D convolution, stride 1, "same" padding (`(k-1)/2`), odd kernel size.
///
/// The heavy lifting is one GEMM per image over an im2col buffer; images in
/// a batch are processed in parallel with disjoint output slices, so the
/// result does not depend on scheduling.
#[derive(Debug, Clone)]
pub struct Conv2d<S> {
    pub weight: Param<S>,
    pub bias: Option<Param<S>>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    padding: usize,
}

impl<S: Scalar> Conv2d<S> {
    /// Kaiming-style init: `N(0, gain^2 / fan_in)`, drawn in f64 so the same
    /// seed yields the same underlying values for f32 and f64 models.
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        with_bias: bool,
        gain: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        let fan_in = (in_channels * kernel * kernel) as f64;
        let std = gain / fan_in.sqrt();
        let mut data = Vec::with_capacity(out_channels * in_channels * kernel * kernel);
        for _ in 0..data.capacity() {
            let z: f64 = rng.sample(StandardNormal);
            data.push(S::from_f64(z * std));
        }
        let weight = Param::new(
            format!("{name}.weight"),
            Array4::from_shape_vec((out_channels, in_channels, kernel, kernel), data)
                .unwrap()
                .into_dyn(),
            true,
        );
        let bias = with_bias.then(|| {
            Param::new(
                format!("{name}.bias"),
                ndarray::Array1::zeros(out_channels).into_dyn(),
                false,
            )
        });
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            padding: (kernel - 1) / 2,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    fn weight_mat(&self) -> ArrayView2<'_, S> {
        let k = self.in_channels * self.kernel * self.kernel;
        self.weight
            .data
            .view()
            .into_shape_with_order((self.out_channels, k))
            .unwrap()
    }

    pub fn forward(&self, x: &Array4<S>) -> Array4<S> {
        let (n, cin, h, w) = x.dim();
        assert_eq!(cin, self.in_channels, "conv input channel mismatch");
        let mut y = Array4::zeros((n, self.out_channels, h, w));
        let w_mat = self.weight_mat();
        let k = self.in_channels * self.kernel * self.kernel;

        y.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(x.axis_iter(Axis(0)).into_par_iter())
            .for_each(|(mut yn, xn)| {
                let mut out = yn
                    .view_mut()
                    .into_shape_with_order((self.out_channels, h * w))
                    .unwrap();
                if self.kernel == 1 {
                    let xmat = xn.into_shape_with_order((cin, h * w)).unwrap();
                    general_mat_mul(S::one(), &w_mat, &xmat, S::zero(), &mut out);
                } else {
                    let cols = im2col(&xn, self.kernel, self.padding);
                    let cols_view = cols
                        .view()
                        .into_shape_with_order((k, h * w))
                        .unwrap();
                    general_mat_mul(S::one(), &w_mat, &cols_view, S::zero(), &mut out);
                }
                if let Some(b) = &self.bias {
                    let b = b.data.view().into_shape_with_order(self.out_channels).unwrap();
                    for (c, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
                        let bc = b[c];
                        row.mapv_inplace(|v| v + bc);
                    }
                }
            });
        y
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Array4<S>, dy: &Array4<S>) -> Array4<S> {
        let (n, cin, h, w) = x.dim();
        let k = self.in_channels * self.kernel * self.kernel;
        let w_mat = self.weight_mat().to_owned();

        // Per-image weight-gradient contributions and input gradients are
        // computed in parallel; the dW sum runs afterwards in index order.
        let per_image: Vec<(Array2<S>, Array4<S>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let xn = x.index_axis(Axis(0), i);
                let dyn_ = dy.index_axis(Axis(0), i);
                let dy_mat = dyn_
                    .into_shape_with_order((self.out_channels, h * w))
                    .unwrap();

                let mut dw = Array2::zeros((self.out_channels, k));
                let mut dcols = Array2::zeros((k, h * w));
                if self.kernel == 1 {
                    let xmat = xn.into_shape_with_order((cin, h * w)).unwrap();
                    general_mat_mul(S::one(), &dy_mat, &xmat.t(), S::zero(), &mut dw);
                } else {
                    let cols = im2col(&xn, self.kernel, self.padding);
                    let cols_view = cols.view().into_shape_with_order((k, h * w)).unwrap();
                    general_mat_mul(S::one(), &dy_mat, &cols_view.t(), S::zero(), &mut dw);
                }
                general_mat_mul(S::one(), &w_mat.t(), &dy_mat, S::zero(), &mut dcols);
                let dx = if self.kernel == 1 {
                    dcols
                        .into_shape_with_order((1, cin, h, w))
                        .unwrap()
                } else {
                    col2im(&dcols, cin, h, w, self.kernel, self.padding)
                        .into_shape_with_order((1, cin, h, w))
                        .unwrap()
                };
                (dw, dx)
            })
            .collect();

        let mut dx = Array4::zeros((n, cin, h, w));
        {
            let mut wgrad = self
                .weight
                .grad
                .view_mut()
                .into_shape_with_order((self.out_channels, k))
                .unwrap();
            for (i, (dw, dxi)) in per_image.into_iter().enumerate() {
                wgrad += &dw;
                dx.index_axis_mut(Axis(0), i)
                    .assign(&dxi.index_axis(Axis(0), 0));
            }
        }
        if let Some(b) = &mut self.bias {
            let mut bgrad = b
                .grad
                .view_mut()
                .into_shape_with_order(self.out_channels)
                .unwrap();
            for i in 0..n {
                for c in 0..self.out_channels {
                    let mut acc = S::zero();
                    for v in dy.index_axis(Axis(0), i).index_axis(Axis(0), c).iter() {
                        acc += *v;
                    }
                    bgrad[c] += acc;
                }
            }
        }
        dx
    }
}

/// Unfold one image `[C, H, W]` into `[C*k*k, H*W]` patch columns.
fn im2col<S: Scalar>(x: &ndarray::ArrayView3<'_, S>, kernel: usize, padding: usize) -> Array2<S> {
    let (c, h, w) = x.dim();
    let mut cols = Array2::zeros((c * kernel * kernel, h * w));
    for ch in 0..c {
        let plane = x.index_axis(Axis(0), ch);
        let plane_slice = plane.to_slice().expect("contiguous image plane");
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row_idx = (ch * kernel + ky) * kernel + kx;
                let mut row = cols.row_mut(row_idx);
                let row_slice = row.as_slice_mut().unwrap();
                for oy in 0..h {
                    let iy = oy as isize + ky as isize - padding as isize;
                    let dst = &mut row_slice[oy * w..(oy + 1) * w];
                    if iy < 0 || iy >= h as isize {
                        continue; // already zero
                    }
                    let src_row = &plane_slice[iy as usize * w..(iy as usize + 1) * w];
                    // valid ox range: 0 <= ox + kx - padding < w
                    let shift = kx as isize - padding as isize;
                    let ox_lo = (-shift).max(0) as usize;
                    let ox_hi = ((w as isize - shift).min(w as isize)).max(0) as usize;
                    if ox_lo < ox_hi {
                        dst[ox_lo..ox_hi].copy_from_slice(
                            &src_row[(ox_lo as isize + shift) as usize
                                ..(ox_hi as isize + shift) as usize],
                        );
                    }
                }
            }
        }
    }
    cols
}

/// Fold `[C*k*k, H*W]` patch-column gradients back onto an image (adds
/// overlapping contributions).
fn col2im<S: Scalar>(
    cols: &Array2<S>,
    c: usize,
    h: usize,
    w: usize,
    kernel: usize,
    padding: usize,
) -> Array4<S> {
    let mut x = Array4::zeros((1, c, h, w));
    for ch in 0..c {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row_idx = (ch * kernel + ky) * kernel + kx;
                let row = cols.row(row_idx);
                let row_slice = row.to_slice().unwrap();
                let shift_x = kx as isize - padding as isize;
                for oy in 0..h {
                    let iy = oy as isize + ky as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let ox_lo = (-shift_x).max(0) as usize;
                    let ox_hi = ((w as isize - shift_x).min(w as isize)).max(0) as usize;
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let src = &row_slice[oy * w + ox_lo..oy * w + ox_hi];
                    let mut dst = x.slice_mut(ndarray::s![
                        0,
                        ch,
                        iy as usize,
                        (ox_lo as isize + shift_x) as usize..(ox_hi as isize + shift_x) as usize
                    ]);
                    let dst_slice = dst.as_slice_mut().unwrap();
                    for (d, s) in dst_slice.iter_mut().zip(src) {
                        *d += *s;
                    }
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    /// Direct convolution, the slow reference for the im2col+GEMM path.
    fn conv_reference(
        x: &Array4<f64>,
        weight: &Array4<f64>,
        bias: Option<&[f64]>,
        padding: usize,
    ) -> Array4<f64> {
        let (n, cin, h, w) = x.dim();
        let (cout, _, kh, kw) = weight.dim();
        let mut y = Array4::zeros((n, cout, h, w));
        for i in 0..n {
            for co in 0..cout {
                for oy in 0..h {
                    for ox in 0..w {
                        let mut acc = bias.map_or(0.0, |b| b[co]);
                        for ci in 0..cin {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = oy as isize + ky as isize - padding as isize;
                                    let ix = ox as isize + kx as isize - padding as isize;
                                    if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                        acc += x[[i, ci, iy as usize, ix as usize]]
                                            * weight[[co, ci, ky, kx]];
                                    }
                                }
                            }
                        }
                        y[[i, co, oy, ox]] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn forward_matches_direct_convolution() {
        let mut r = rng();
        for &(kernel, cin, cout, h, w) in &[(3usize, 2usize, 4usize, 5usize, 7usize), (1, 3, 2, 4, 4)] {
            let conv = Conv2d::<f64>::new("t", cin, cout, kernel, true, 1.0, &mut r);
            let x = Array4::from_shape_fn((2, cin, h, w), |_| r.gen_range(-1.0..1.0));
            let got = conv.forward(&x);
            let wgt = conv
                .weight
                .data
                .view()
                .into_shape_with_order((cout, cin, kernel, kernel))
                .unwrap()
                .to_owned();
            let bias: Vec<f64> = conv.bias.as_ref().unwrap().data.iter().copied().collect();
            let want = conv_reference(&x, &wgt, Some(&bias), (kernel - 1) / 2);
            for (a, b) in got.iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng();
        let mut conv = Conv2d::<f64>::new("t", 2, 3, 3, true, 1.0, &mut r);
        let x = Array4::from_shape_fn((2, 2, 4, 4), |_| r.gen_range(-1.0..1.0));
        // scalar objective: weighted sum of outputs
        let coef = Array4::from_shape_fn((2, 3, 4, 4), |_| r.gen_range(-1.0..1.0));
        let loss = |conv: &Conv2d<f64>, x: &Array4<f64>| -> f64 {
            (conv.forward(x) * &coef).sum()
        };

        let dx = conv.backward(&x, &coef);
        let h = 1e-6;

        // input grads
        let mut xp = x.clone();
        for idx in [[0, 0, 0, 0], [1, 1, 3, 2], [0, 1, 2, 3]] {
            xp[idx] += h;
            let up = loss(&conv, &xp);
            xp[idx] -= 2.0 * h;
            let down = loss(&conv, &xp);
            xp[idx] += h;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - dx[idx]).abs() < 1e-6, "dx mismatch at {idx:?}");
        }

        // weight grads
        for flat in [0usize, 7, 23, 53] {
            let base = conv.weight.data.as_slice().unwrap()[flat];
            conv.weight.data.as_slice_mut().unwrap()[flat] = base + h;
            let up = loss(&conv, &x);
            conv.weight.data.as_slice_mut().unwrap()[flat] = base - h;
            let down = loss(&conv, &x);
            conv.weight.data.as_slice_mut().unwrap()[flat] = base;
            let fd = (up - down) / (2.0 * h);
            let got = conv.weight.grad.as_slice().unwrap()[flat];
            assert!((fd - got).abs() < 1e-6, "dW mismatch at {flat}: {fd} vs {got}");
        }

        // bias grads
        let bias_grad = conv.bias.as_ref().unwrap().grad.clone();
        let expected: Vec<f64> = (0..3)
            .map(|c| coef.index_axis(Axis(1), c).sum())
            .collect();
        for (c, &e) in expected.iter().enumerate() {
            assert!((bias_grad.as_slice().unwrap()[c] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Conv2d::<f32>::new("t", 3, 8, 3, false, 1.0, &mut rng());
        let b = Conv2d::<f32>::new("t", 3, 8, 3, false, 1.0, &mut rng());
        assert_eq!(a.weight.data, b.weight.data);
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), c> == <x, col2im(c)> for random x, c
        let mut r = rng();
        let x = Array3::from_shape_fn((2, 5, 6), |_| r.gen_range(-1.0..1.0));
        let cols_rand = Array2::from_shape_fn((2 * 9, 30), |_| r.gen_range(-1.0..1.0));
        let cols = im2col(&x.view(), 3, 1);
        let lhs: f64 = (&cols * &cols_rand).sum();
        let folded = col2im(&cols_rand, 2, 5, 6, 3, 1);
        let rhs: f64 = x
            .iter()
            .zip(folded.index_axis(Axis(0), 0).iter())
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
