use super::{DetectorConfig, ModelError, RawPrediction, RawScale};
use crate::nn::{
    concat_channels, split_channels_grad, BatchNorm2d, Conv2d, LeakyRelu, MaxPool2x2, Param,
    UpsampleNearest2x,
};
use crate::scalar::Scalar;
use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LEAKY_SLOPE: f64 = 0.1;

/// conv -> batch norm -> leaky ReLU, the unit the whole network is made of.
#[derive(Debug, Clone)]
struct ConvBlock<S> {
    conv: Conv2d<S>,
    bn: BatchNorm2d<S>,
    act: LeakyRelu<S>,
}

struct BlockCache<S> {
    input: Array4<S>,
    conv_out: Array4<S>,
    bn_out: Array4<S>,
    bn_cache: crate::nn::BnCache<S>,
}

impl<S: Scalar> ConvBlock<S> {
    fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        bn_momentum: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        // gain for the leaky rectifier that follows
        let gain = (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt();
        Self {
            conv: Conv2d::new(name, in_ch, out_ch, kernel, false, gain, rng),
            bn: BatchNorm2d::new(name, out_ch, bn_momentum),
            act: LeakyRelu::new(LEAKY_SLOPE),
        }
    }

    fn forward_train(&mut self, x: &Array4<S>) -> (Array4<S>, BlockCache<S>) {
        let conv_out = self.conv.forward(x);
        let (bn_out, bn_cache) = self.bn.forward_train(&conv_out);
        let y = self.act.forward(&bn_out);
        (
            y,
            BlockCache {
                input: x.clone(),
                conv_out,
                bn_out,
                bn_cache,
            },
        )
    }

    fn forward_eval(&self, x: &Array4<S>) -> Array4<S> {
        self.act.forward(&self.bn.forward_eval(&self.conv.forward(x)))
    }

    fn backward(&mut self, cache: &BlockCache<S>, dy: &Array4<S>) -> Array4<S> {
        let d_bn_out = self.act.backward(&cache.bn_out, dy);
        let d_conv_out = self.bn.backward(&cache.conv_out, &cache.bn_cache, &d_bn_out);
        self.conv.backward(&cache.input, &d_conv_out)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<S>)) {
        f(&mut self.conv.weight);
        f(&mut self.bn.gamma);
        f(&mut self.bn.beta);
    }
}

/// The detector network. Immutable during evaluation; training mutates
/// parameters through a single writer.
#[derive(Debug, Clone)]
pub struct Detector<S> {
    config: DetectorConfig,
    backbone: Vec<ConvBlock<S>>,
    neck: ConvBlock<S>,
    mid: ConvBlock<S>,
    coarse_tower: ConvBlock<S>,
    coarse_head: Conv2d<S>,
    up_proj: ConvBlock<S>,
    fine_tower: ConvBlock<S>,
    fine_head: Conv2d<S>,
}

/// Activations saved by a training-mode forward pass, consumed by
/// [`Detector::backward`].
pub struct ForwardCache<S> {
    blocks: Vec<BlockCache<S>>,
    pool_caches: Vec<crate::nn::PoolCache>,
    pool_input_dims: Vec<(usize, usize)>,
    neck: BlockCache<S>,
    mid: BlockCache<S>,
    coarse_tower: BlockCache<S>,
    coarse_tower_out: Array4<S>,
    up_proj: BlockCache<S>,
    fine_tower: BlockCache<S>,
    fine_tower_out: Array4<S>,
    fine_source_channels: (usize, usize),
}

/// Validate the config and construct a detector with seed-deterministic
/// parameters.
pub fn build_detector<S: Scalar>(config: &DetectorConfig) -> Result<Detector<S>, ModelError> {
    config.validate()?;
    if config.anchor_sizes.is_empty() {
        return Err(ModelError::InvalidConfig(
            "anchor_sizes are empty; cluster them from training data first".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let widths = &config.channel_widths;
    let last = *widths.last().unwrap();
    let neck_w = last * 2;
    let mid_w = (last / 2).max(1);
    let coarse_w = last;
    let up_w = (last / 4).max(1);
    let fine_w = (last / 2).max(1);
    let head_ch = config.head_channels();
    let m = config.bn_momentum;

    let mut backbone = Vec::with_capacity(widths.len());
    let mut in_ch = 3;
    for (i, &w) in widths.iter().enumerate() {
        backbone.push(ConvBlock::new(&format!("backbone{i}"), in_ch, w, 3, m, &mut rng));
        in_ch = w;
    }
    let neck = ConvBlock::new("neck", last, neck_w, 3, m, &mut rng);
    let mid = ConvBlock::new("mid", neck_w, mid_w, 1, m, &mut rng);
    let coarse_tower = ConvBlock::new("coarse_tower", mid_w, coarse_w, 3, m, &mut rng);
    let coarse_head = Conv2d::new("coarse_head", coarse_w, head_ch, 1, true, 1.0, &mut rng);
    let up_proj = ConvBlock::new("up_proj", mid_w, up_w, 1, m, &mut rng);
    let fine_in = up_w + widths[widths.len() - 2];
    let fine_tower = ConvBlock::new("fine_tower", fine_in, fine_w, 3, m, &mut rng);
    let fine_head = Conv2d::new("fine_head", fine_w, head_ch, 1, true, 1.0, &mut rng);

    Ok(Detector {
        config: config.clone(),
        backbone,
        neck,
        mid,
        coarse_tower,
        coarse_head,
        up_proj,
        fine_tower,
        fine_head,
    })
}

impl<S: Scalar> Detector<S> {
    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    fn check_input(&self, images: &Array4<S>) -> Result<(), ModelError> {
        let (_, c, h, w) = images.dim();
        let stride = self.config.strides.0;
        if c != 3 || h != w || h == 0 || h % stride != 0 {
            return Err(ModelError::BadInputShape {
                got: images.shape().to_vec(),
                stride,
            });
        }
        Ok(())
    }

    fn check_finite(&self, raw: &RawPrediction<S>) -> Result<(), ModelError> {
        for (i, scale) in raw.scales.iter().enumerate() {
            if scale.map.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteOutput { scale: i });
            }
        }
        Ok(())
    }

    /// Training-mode forward: batch-norm uses batch statistics (and updates
    /// the running averages); returns the activations needed for backward.
    pub fn forward_train(
        &mut self,
        images: &Array4<S>,
    ) -> Result<(RawPrediction<S>, ForwardCache<S>), ModelError> {
        self.check_input(images)?;
        let pool = MaxPool2x2;
        let n_stages = self.backbone.len();

        let mut blocks = Vec::with_capacity(n_stages);
        let mut pool_caches = Vec::with_capacity(n_stages - 1);
        let mut pool_input_dims = Vec::with_capacity(n_stages - 1);
        let mut cur = images.clone();
        let mut fine_source = None;
        for i in 0..n_stages {
            let (out, cache) = self.backbone[i].forward_train(&cur);
            blocks.push(cache);
            if i + 1 == n_stages {
                cur = out;
            } else {
                if i + 2 == n_stages {
                    // feature just before the last pool feeds the fine scale
                    fine_source = Some(out.clone());
                }
                let (h, w) = (out.dim().2, out.dim().3);
                let (pooled, pc) = pool.forward(&out);
                pool_caches.push(pc);
                pool_input_dims.push((h, w));
                cur = pooled;
            }
        }
        let fine_source = fine_source.expect("backbone has at least two stages");

        let (neck_out, neck) = self.neck.forward_train(&cur);
        let (mid_out, mid) = self.mid.forward_train(&neck_out);
        let (coarse_tower_out, coarse_tower) = self.coarse_tower.forward_train(&mid_out);
        let coarse_raw = self.coarse_head.forward(&coarse_tower_out);

        let (up_out, up_proj) = self.up_proj.forward_train(&mid_out);
        let upsampled = UpsampleNearest2x.forward(&up_out);
        let concat_in = concat_channels(&[&upsampled, &fine_source]);
        let (fine_tower_out, fine_tower) = self.fine_tower.forward_train(&concat_in);
        let fine_raw = self.fine_head.forward(&fine_tower_out);

        let raw = RawPrediction {
            scales: vec![
                RawScale {
                    stride: self.config.strides.0,
                    map: coarse_raw,
                },
                RawScale {
                    stride: self.config.strides.1,
                    map: fine_raw,
                },
            ],
        };
        self.check_finite(&raw)?;
        let up_channels = up_out.dim().1;
        let src_channels = fine_source.dim().1;
        Ok((
            raw,
            ForwardCache {
                blocks,
                pool_caches,
                pool_input_dims,
                neck,
                mid,
                coarse_tower,
                coarse_tower_out,
                up_proj,
                fine_tower,
                fine_tower_out,
                fine_source_channels: (up_channels, src_channels),
            },
        ))
    }

    /// Inference-mode forward using batch-norm running statistics.
    pub fn forward(&self, images: &Array4<S>) -> Result<RawPrediction<S>, ModelError> {
        self.check_input(images)?;
        let pool = MaxPool2x2;
        let n_stages = self.backbone.len();
        let mut cur = images.clone();
        let mut fine_source = None;
        for i in 0..n_stages {
            let out = self.backbone[i].forward_eval(&cur);
            if i + 1 == n_stages {
                cur = out;
            } else {
                if i + 2 == n_stages {
                    fine_source = Some(out.clone());
                }
                let (pooled, _) = pool.forward(&out);
                cur = pooled;
            }
        }
        let fine_source = fine_source.expect("backbone has at least two stages");
        let neck_out = self.neck.forward_eval(&cur);
        let mid_out = self.mid.forward_eval(&neck_out);
        let coarse_raw = self.coarse_head.forward(&self.coarse_tower.forward_eval(&mid_out));
        let up_out = self.up_proj.forward_eval(&mid_out);
        let upsampled = UpsampleNearest2x.forward(&up_out);
        let concat_in = concat_channels(&[&upsampled, &fine_source]);
        let fine_raw = self.fine_head.forward(&self.fine_tower.forward_eval(&concat_in));

        let raw = RawPrediction {
            scales: vec![
                RawScale {
                    stride: self.config.strides.0,
                    map: coarse_raw,
                },
                RawScale {
                    stride: self.config.strides.1,
                    map: fine_raw,
                },
            ],
        };
        self.check_finite(&raw)?;
        Ok(raw)
    }

    /// Backpropagate head-map gradients, accumulating parameter gradients.
    pub fn backward(&mut self, cache: &ForwardCache<S>, d_raw: &[Array4<S>]) {
        assert_eq!(d_raw.len(), 2, "one gradient map per scale");
        let pool = MaxPool2x2;

        let d_coarse_tower_out = self.coarse_head.backward(&cache.coarse_tower_out, &d_raw[0]);
        let d_mid_from_coarse = self.coarse_tower.backward(&cache.coarse_tower, &d_coarse_tower_out);

        let d_fine_tower_out = self.fine_head.backward(&cache.fine_tower_out, &d_raw[1]);
        let d_concat = self.fine_tower.backward(&cache.fine_tower, &d_fine_tower_out);
        let (up_ch, src_ch) = cache.fine_source_channels;
        let parts = split_channels_grad(&d_concat, &[up_ch, src_ch]);
        let d_up_out = UpsampleNearest2x.backward(&parts[0]);
        let d_mid_from_up = self.up_proj.backward(&cache.up_proj, &d_up_out);

        let d_mid_out = &d_mid_from_coarse + &d_mid_from_up;
        let d_neck_out = self.mid.backward(&cache.mid, &d_mid_out);
        let mut d_cur = self.neck.backward(&cache.neck, &d_neck_out);

        // walk the backbone in reverse; the fine-scale skip feeds extra
        // gradient into the second-to-last stage's output
        let n_stages = self.backbone.len();
        for i in (0..n_stages).rev() {
            if i + 1 < n_stages {
                let (h, w) = cache.pool_input_dims[i];
                let mut d_out = pool.backward(&cache.pool_caches[i], &d_cur, h, w);
                if i + 2 == n_stages {
                    d_out = &d_out + &parts[1];
                }
                d_cur = self.backbone[i].backward(&cache.blocks[i], &d_out);
            } else {
                d_cur = self.backbone[i].backward(&cache.blocks[i], &d_cur);
            }
        }
    }

    /// Visit every learnable parameter in a fixed order.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<S>)) {
        for block in &mut self.backbone {
            block.visit_params(f);
        }
        self.neck.visit_params(f);
        self.mid.visit_params(f);
        self.coarse_tower.visit_params(f);
        f(&mut self.coarse_head.weight);
        if let Some(b) = &mut self.coarse_head.bias {
            f(b);
        }
        self.up_proj.visit_params(f);
        self.fine_tower.visit_params(f);
        f(&mut self.fine_head.weight);
        if let Some(b) = &mut self.fine_head.bias {
            f(b);
        }
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }

    /// Named tensors for checkpointing: all params plus BN running stats.
    pub fn named_state(&mut self) -> Vec<(String, Vec<S>, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| {
            out.push((
                p.name.clone(),
                p.data.iter().copied().collect(),
                p.data.shape().to_vec(),
            ));
        });
        for (name, bn) in self.named_norms() {
            out.push((
                format!("{name}.running_mean"),
                bn.running_mean.to_vec(),
                vec![bn.running_mean.len()],
            ));
            out.push((
                format!("{name}.running_var"),
                bn.running_var.to_vec(),
                vec![bn.running_var.len()],
            ));
        }
        out
    }

    /// Restore tensors produced by [`Detector::named_state`].
    pub fn load_state(&mut self, state: &[(String, Vec<S>, Vec<usize>)]) -> Result<(), ModelError> {
        use std::collections::HashMap;
        let map: HashMap<&str, &(String, Vec<S>, Vec<usize>)> =
            state.iter().map(|t| (t.0.as_str(), t)).collect();
        let mut missing = Vec::new();
        self.visit_params(&mut |p| {
            if let Some((_, data, shape)) = map.get(p.name.as_str()) {
                if shape.as_slice() == p.data.shape() {
                    p.data = ndarray::ArrayD::from_shape_vec(shape.clone(), data.clone()).unwrap();
                } else {
                    missing.push(format!("{} (shape mismatch)", p.name));
                }
            } else {
                missing.push(p.name.clone());
            }
        });
        for (name, bn) in self.named_norms_mut() {
            for (suffix, target) in [("running_mean", 0usize), ("running_var", 1)] {
                let key = format!("{name}.{suffix}");
                match map.get(key.as_str()) {
                    Some((_, data, _)) if data.len() == bn.channels() => {
                        let arr = ndarray::Array1::from_vec(data.clone());
                        if target == 0 {
                            bn.running_mean = arr;
                        } else {
                            bn.running_var = arr;
                        }
                    }
                    _ => missing.push(key),
                }
            }
        }
        if !missing.is_empty() {
            return Err(ModelError::BadCheckpoint(format!(
                "missing or mismatched tensors: {}",
                missing.join(", ")
            )));
        }
        Ok(())
    }

    fn named_norms(&self) -> Vec<(String, &BatchNorm2d<S>)> {
        let mut out: Vec<(String, &BatchNorm2d<S>)> = Vec::new();
        for (i, b) in self.backbone.iter().enumerate() {
            out.push((format!("backbone{i}"), &b.bn));
        }
        out.push(("neck".into(), &self.neck.bn));
        out.push(("mid".into(), &self.mid.bn));
        out.push(("coarse_tower".into(), &self.coarse_tower.bn));
        out.push(("up_proj".into(), &self.up_proj.bn));
        out.push(("fine_tower".into(), &self.fine_tower.bn));
        out
    }

    fn named_norms_mut(&mut self) -> Vec<(String, &mut BatchNorm2d<S>)> {
        let mut out: Vec<(String, &mut BatchNorm2d<S>)> = Vec::new();
        for (i, b) in self.backbone.iter_mut().enumerate() {
            out.push((format!("backbone{i}"), &mut b.bn));
        }
        out.push(("neck".into(), &mut self.neck.bn));
        out.push(("mid".into(), &mut self.mid.bn));
        out.push(("coarse_tower".into(), &mut self.coarse_tower.bn));
        out.push(("up_proj".into(), &mut self.up_proj.bn));
        out.push(("fine_tower".into(), &mut self.fine_tower.bn));
        out
    }
}
