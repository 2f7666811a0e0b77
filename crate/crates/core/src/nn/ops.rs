use crate::scalar::Scalar;
use ndarray::{Array4, Axis};

/// Leaky rectifier with configurable negative slope.
#[derive(Debug, Clone, Copy)]
pub struct LeakyRelu<S> {
    pub slope: S,
}

impl<S: Scalar> LeakyRelu<S> {
    pub fn new(slope: f64) -> Self {
        Self {
            slope: S::from_f64(slope),
        }
    }

    pub fn forward(&self, x: &Array4<S>) -> Array4<S> {
        let slope = self.slope;
        x.mapv(|v| if v > S::zero() { v } else { slope * v })
    }

    pub fn backward(&self, x: &Array4<S>, dy: &Array4<S>) -> Array4<S> {
        let slope = self.slope;
        let mut dx = dy.clone();
        dx.zip_mut_with(x, |d, &xv| {
            if xv <= S::zero() {
                *d = *d * slope;
            }
        });
        dx
    }
}

/// 2x2 max pooling with stride 2. Requires even spatial dims.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxPool2x2;

/// Winner positions (0..4, row-major within each window) for the backward scatter.
pub struct PoolCache {
    argmax: Array4<u8>,
}

impl MaxPool2x2 {
    pub fn forward<S: Scalar>(&self, x: &Array4<S>) -> (Array4<S>, PoolCache) {
        let (n, c, h, w) = x.dim();
        assert!(h % 2 == 0 && w % 2 == 0, "maxpool needs even spatial dims");
        let (oh, ow) = (h / 2, w / 2);
        let mut y = Array4::zeros((n, c, oh, ow));
        let mut argmax = Array4::zeros((n, c, oh, ow));
        for i in 0..n {
            for ch in 0..c {
                let plane = x.index_axis(Axis(0), i);
                let plane = plane.index_axis(Axis(0), ch);
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = plane[[2 * oy, 2 * ox]];
                        let mut best_k = 0u8;
                        for (k, (dy_, dx_)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                            let v = plane[[2 * oy + dy_, 2 * ox + dx_]];
                            if v > best {
                                best = v;
                                best_k = k as u8;
                            }
                        }
                        y[[i, ch, oy, ox]] = best;
                        argmax[[i, ch, oy, ox]] = best_k;
                    }
                }
            }
        }
        (y, PoolCache { argmax })
    }

    pub fn backward<S: Scalar>(
        &self,
        cache: &PoolCache,
        dy: &Array4<S>,
        input_h: usize,
        input_w: usize,
    ) -> Array4<S> {
        let (n, c, oh, ow) = dy.dim();
        let mut dx = Array4::zeros((n, c, input_h, input_w));
        for i in 0..n {
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let k = cache.argmax[[i, ch, oy, ox]] as usize;
                        let (ky, kx) = (k / 2, k % 2);
                        dx[[i, ch, 2 * oy + ky, 2 * ox + kx]] += dy[[i, ch, oy, ox]];
                    }
                }
            }
        }
        dx
    }
}

/// Nearest-neighbor 2x upsampling.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpsampleNearest2x;

impl UpsampleNearest2x {
    pub fn forward<S: Scalar>(&self, x: &Array4<S>) -> Array4<S> {
        let (n, c, h, w) = x.dim();
        let mut y = Array4::zeros((n, c, 2 * h, 2 * w));
        for i in 0..n {
            for ch in 0..c {
                for yy in 0..2 * h {
                    for xx in 0..2 * w {
                        y[[i, ch, yy, xx]] = x[[i, ch, yy / 2, xx / 2]];
                    }
                }
            }
        }
        y
    }

    pub fn backward<S: Scalar>(&self, dy: &Array4<S>) -> Array4<S> {
        let (n, c, h2, w2) = dy.dim();
        let (h, w) = (h2 / 2, w2 / 2);
        let mut dx = Array4::zeros((n, c, h, w));
        for i in 0..n {
            for ch in 0..c {
                for yy in 0..h2 {
                    for xx in 0..w2 {
                        dx[[i, ch, yy / 2, xx / 2]] += dy[[i, ch, yy, xx]];
                    }
                }
            }
        }
        dx
    }
}

/// Concatenate along the channel axis.
pub fn concat_channels<S: Scalar>(parts: &[&Array4<S>]) -> Array4<S> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(1), &views).expect("channel concat")
}

/// Split a channel-concatenated gradient back into per-part gradients.
pub fn split_channels_grad<S: Scalar>(dy: &Array4<S>, channels: &[usize]) -> Vec<Array4<S>> {
    let mut out = Vec::with_capacity(channels.len());
    let mut offset = 0;
    for &c in channels {
        out.push(
            dy.slice(ndarray::s![.., offset..offset + c, .., ..])
                .to_owned(),
        );
        offset += c;
    }
    assert_eq!(offset, dy.dim().1);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn leaky_relu_forward_backward() {
        let act = LeakyRelu::<f64>::new(0.1);
        let x = ndarray::arr1(&[-2.0, 0.0, 3.0])
            .into_shape_with_order((1, 1, 1, 3))
            .unwrap()
            .to_owned();
        let y = act.forward(&x);
        assert_eq!(y.as_slice().unwrap(), &[-0.2, 0.0, 3.0]);
        let dy = Array4::from_elem((1, 1, 1, 3), 1.0);
        let dx = act.backward(&x, &dy);
        assert_eq!(dx.as_slice().unwrap(), &[0.1, 0.1, 1.0]);
    }

    #[test]
    fn maxpool_selects_max_and_routes_gradient() {
        let x = ndarray::arr1(&[1.0, 2.0, 3.0, 4.0])
            .into_shape_with_order((1, 1, 2, 2))
            .unwrap()
            .to_owned();
        let pool = MaxPool2x2;
        let (y, cache) = pool.forward(&x);
        assert_eq!(y[[0, 0, 0, 0]], 4.0);
        let dy = Array4::from_elem((1, 1, 1, 1), 5.0);
        let dx = pool.backward::<f64>(&cache, &dy, 2, 2);
        assert_eq!(dx[[0, 0, 1, 1]], 5.0);
        assert_eq!(dx.sum(), 5.0);
    }

    #[test]
    fn upsample_round_trip_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array4::from_shape_fn((1, 2, 3, 3), |_| rng.gen_range(-1.0..1.0));
        let up = UpsampleNearest2x;
        let y = up.forward(&x);
        assert_eq!(y.dim(), (1, 2, 6, 6));
        let dy = Array4::from_shape_fn((1, 2, 6, 6), |_| rng.gen_range(-1.0..1.0));
        let dx = up.backward(&dy);
        // adjoint identity <up(x), dy> == <x, up^T(dy)>
        let lhs: f64 = (&y * &dy).sum();
        let rhs: f64 = (&x * &dx).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn concat_split_round_trip() {
        let a = Array4::<f64>::from_elem((1, 2, 2, 2), 1.0);
        let b = Array4::<f64>::from_elem((1, 3, 2, 2), 2.0);
        let y = concat_channels(&[&a, &b]);
        assert_eq!(y.dim(), (1, 5, 2, 2));
        let parts = split_channels_grad(&y, &[2, 3]);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
