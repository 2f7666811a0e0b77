use super::param::Param;
use crate::scalar::Scalar;
use ndarray::{Array1, Array4, Axis};

/// Per-channel batch normalization over `[N, H, W]`.
///
/// Training normalizes with the current batch's statistics and folds them
/// into running averages (`running = (1-momentum)*running + momentum*batch`,
/// unbiased variance); evaluation normalizes with the running averages.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<S> {
    pub gamma: Param<S>,
    pub beta: Param<S>,
    pub running_mean: Array1<S>,
    pub running_var: Array1<S>,
    pub momentum: S,
    pub eps: S,
    channels: usize,
}

/// Saved batch statistics needed by the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<S> {
    mean: Array1<S>,
    inv_std: Array1<S>,
}

impl<S: Scalar> BatchNorm2d<S> {
    pub fn new(name: &str, channels: usize, momentum: f64) -> Self {
        Self {
            gamma: Param::new(
                format!("{name}.gamma"),
                Array1::from_elem(channels, S::one()).into_dyn(),
                false,
            ),
            beta: Param::new(
                format!("{name}.beta"),
                Array1::zeros(channels).into_dyn(),
                false,
            ),
            running_mean: Array1::zeros(channels),
            running_var: Array1::from_elem(channels, S::one()),
            momentum: S::from_f64(momentum),
            eps: S::from_f64(1e-5),
            channels,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn forward_train(&mut self, x: &Array4<S>) -> (Array4<S>, BnCache<S>) {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.channels);
        let count = S::from_usize(n * h * w);
        let mut mean = Array1::zeros(c);
        let mut var = Array1::zeros(c);
        for ch in 0..c {
            let mut acc = S::zero();
            for i in 0..n {
                for v in x.index_axis(Axis(0), i).index_axis(Axis(0), ch).iter() {
                    acc += *v;
                }
            }
            let m = acc / count;
            let mut vacc = S::zero();
            for i in 0..n {
                for v in x.index_axis(Axis(0), i).index_axis(Axis(0), ch).iter() {
                    let d = *v - m;
                    vacc += d * d;
                }
            }
            mean[ch] = m;
            var[ch] = vacc / count;
        }

        // running averages use the unbiased variance, as is conventional
        let one = S::one();
        let unbias = if n * h * w > 1 {
            count / (count - one)
        } else {
            one
        };
        for ch in 0..c {
            self.running_mean[ch] =
                (one - self.momentum) * self.running_mean[ch] + self.momentum * mean[ch];
            self.running_var[ch] =
                (one - self.momentum) * self.running_var[ch] + self.momentum * var[ch] * unbias;
        }

        let inv_std = var.mapv(|v| one / (v + self.eps).sqrt());
        let y = self.normalize(x, &mean, &inv_std);
        (y, BnCache { mean, inv_std })
    }

    pub fn forward_eval(&self, x: &Array4<S>) -> Array4<S> {
        let one = S::one();
        let inv_std = self.running_var.mapv(|v| one / (v + self.eps).sqrt());
        self.normalize(x, &self.running_mean, &inv_std)
    }

    fn normalize(&self, x: &Array4<S>, mean: &Array1<S>, inv_std: &Array1<S>) -> Array4<S> {
        let (n, c, _, _) = x.dim();
        let gamma = self.gamma.data.view().into_shape_with_order(c).unwrap();
        let beta = self.beta.data.view().into_shape_with_order(c).unwrap();
        let mut y = x.clone();
        for i in 0..n {
            let mut img = y.index_axis_mut(Axis(0), i);
            for ch in 0..c {
                let scale = gamma[ch] * inv_std[ch];
                let shift = beta[ch] - mean[ch] * scale;
                img.index_axis_mut(Axis(0), ch)
                    .mapv_inplace(|v| v * scale + shift);
            }
        }
        y
    }

    /// Full batch-statistics backward; accumulates gamma/beta gradients.
    pub fn backward(&mut self, x: &Array4<S>, cache: &BnCache<S>, dy: &Array4<S>) -> Array4<S> {
        let (n, c, h, w) = x.dim();
        let count = S::from_usize(n * h * w);
        let gamma = self.gamma.data.view().into_shape_with_order(c).unwrap().to_owned();
        let mut dx = Array4::zeros((n, c, h, w));

        let mut dgamma = vec![S::zero(); c];
        let mut dbeta = vec![S::zero(); c];

        for ch in 0..c {
            let m = cache.mean[ch];
            let istd = cache.inv_std[ch];

            // first pass: the two reductions
            let mut sum_dy = S::zero();
            let mut sum_dy_xhat = S::zero();
            for i in 0..n {
                let xs = x.index_axis(Axis(0), i);
                let dys = dy.index_axis(Axis(0), i);
                for (xv, dv) in xs
                    .index_axis(Axis(0), ch)
                    .iter()
                    .zip(dys.index_axis(Axis(0), ch).iter())
                {
                    let xhat = (*xv - m) * istd;
                    sum_dy += *dv;
                    sum_dy_xhat += *dv * xhat;
                }
            }
            dgamma[ch] = sum_dy_xhat;
            dbeta[ch] = sum_dy;

            // second pass: dx = (gamma*istd/m) * (m*dy - sum_dy - xhat*sum_dy_xhat)
            let g = gamma[ch];
            let coef = g * istd / count;
            for i in 0..n {
                let xs = x.index_axis(Axis(0), i);
                let dys = dy.index_axis(Axis(0), i);
                let mut dxs = dx.index_axis_mut(Axis(0), i);
                for ((xv, dv), outv) in xs
                    .index_axis(Axis(0), ch)
                    .iter()
                    .zip(dys.index_axis(Axis(0), ch).iter())
                    .zip(dxs.index_axis_mut(Axis(0), ch).iter_mut())
                {
                    let xhat = (*xv - m) * istd;
                    *outv = coef * (count * *dv - sum_dy - xhat * sum_dy_xhat);
                }
            }
        }

        {
            let mut gg = self.gamma.grad.view_mut().into_shape_with_order(c).unwrap();
            let mut bg = self.beta.grad.view_mut().into_shape_with_order(c).unwrap();
            for ch in 0..c {
                gg[ch] += dgamma[ch];
                bg[ch] += dbeta[ch];
            }
        }
        dx
    }
}
