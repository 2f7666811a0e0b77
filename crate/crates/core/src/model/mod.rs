//! Two-scale single-stage detector: configurable conv/BN/leaky-ReLU
//! backbone, upsample-and-concat neck, per-anchor prediction heads, box
//! decoding, and checkpoint IO.

mod anchors;
mod checkpoint;
mod decode;
mod detector;

pub use anchors::kmeans_anchors;
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use decode::{decode, decode_slot, DecodedDetection};
pub use detector::{build_detector, Detector, ForwardCache};

use crate::scalar::Scalar;
use ndarray::Array4;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("input batch has shape {got:?}, expected [N, 3, S, S] with S divisible by {stride}")]
    BadInputShape { got: Vec<usize>, stride: usize },
    #[error("non-finite value in network output at scale {scale}")]
    NonFiniteOutput { scale: usize },
    #[error("non-finite decoded detection at scale {scale}, cell ({row}, {col}), anchor {anchor}")]
    NonFiniteDecode {
        scale: usize,
        row: usize,
        col: usize,
        anchor: usize,
    },
    #[error("checkpoint IO: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

/// Per-anchor channel layout within a head's output map:
/// `[tx, ty, tw, th, objectness, class 0 .. class C-1]`.
pub const BOX_FIELDS: usize = 5;

/// Detector hyperparameters. `channel_widths` covers the backbone stages
/// (one per downsampling level plus the stem); head widths derive from the
/// last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub num_classes: usize,
    /// Canonical input resolution in pixels; multiples of 32.
    pub input_size: usize,
    /// (coarse, fine) output strides; coarse must be twice fine.
    pub strides: (usize, usize),
    pub anchors_per_scale: usize,
    /// Anchor pixel sizes per scale, `[coarse, fine]`, at `input_size`
    /// resolution. May be left empty and filled from training data.
    pub anchor_sizes: Vec<Vec<(f64, f64)>>,
    pub channel_widths: Vec<usize>,
    /// Batch-norm running-average momentum.
    pub bn_momentum: f64,
    pub seed: u64,
}

impl DetectorConfig {
    /// Classic 13-conv tiny configuration at 416 pixels, kept as a reference
    /// shape; desk-scale experiments use [`DetectorConfig::desk`].
    pub fn reference_tiny() -> Self {
        Self {
            num_classes: 80,
            input_size: 416,
            strides: (32, 16),
            anchors_per_scale: 3,
            anchor_sizes: vec![
                vec![(81.0, 82.0), (135.0, 169.0), (344.0, 319.0)],
                vec![(23.0, 27.0), (37.0, 58.0), (81.0, 82.0)],
            ],
            channel_widths: vec![16, 32, 64, 128, 256, 512],
            bn_momentum: 0.03,
            seed: 0,
        }
    }

    /// Small CPU-trainable configuration. Anchors start empty and are
    /// expected to be clustered from the training set.
    pub fn desk(num_classes: usize, input_size: usize, seed: u64) -> Self {
        Self {
            num_classes,
            input_size,
            strides: (32, 16),
            anchors_per_scale: 3,
            anchor_sizes: Vec::new(),
            channel_widths: vec![8, 16, 24, 32, 40, 48],
            bn_momentum: 0.03,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.num_classes == 0 {
            return err("num_classes must be positive".into());
        }
        let (coarse, fine) = self.strides;
        if fine == 0 || coarse != 2 * fine || !coarse.is_power_of_two() {
            return err(format!(
                "strides must be (2k, k) powers of two, got ({coarse}, {fine})"
            ));
        }
        if self.input_size == 0 || self.input_size % coarse != 0 {
            return err(format!(
                "input_size {} not divisible by stride {coarse}",
                self.input_size
            ));
        }
        let stages = coarse.trailing_zeros() as usize + 1;
        if self.channel_widths.len() != stages {
            return err(format!(
                "channel_widths needs {stages} entries for stride {coarse}, got {}",
                self.channel_widths.len()
            ));
        }
        if self.channel_widths.iter().any(|&c| c == 0) {
            return err("channel widths must be positive".into());
        }
        if self.anchors_per_scale == 0 {
            return err("anchors_per_scale must be positive".into());
        }
        if !self.anchor_sizes.is_empty() {
            if self.anchor_sizes.len() != 2 {
                return err("anchor_sizes must list exactly two scales".into());
            }
            for (i, scale) in self.anchor_sizes.iter().enumerate() {
                if scale.len() != self.anchors_per_scale {
                    return err(format!(
                        "scale {i} has {} anchors, expected {}",
                        scale.len(),
                        self.anchors_per_scale
                    ));
                }
                if scale.iter().any(|&(w, h)| w <= 0.0 || h <= 0.0) {
                    return err("anchor sizes must be positive".into());
                }
            }
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return err(format!("bn_momentum {} outside [0, 1)", self.bn_momentum));
        }
        Ok(())
    }

    /// Channels per anchor slot: 4 box offsets + objectness + classes.
    pub fn slot_channels(&self) -> usize {
        BOX_FIELDS + self.num_classes
    }

    /// Head output channels.
    pub fn head_channels(&self) -> usize {
        self.anchors_per_scale * self.slot_channels()
    }

    /// Grid side length at each stride for a given input resolution.
    pub fn grid_sizes(&self, input_size: usize) -> [usize; 2] {
        [input_size / self.strides.0, input_size / self.strides.1]
    }

    /// Anchors for scale `s`, scaled from canonical `input_size` pixels to a
    /// concrete training resolution.
    pub fn anchors_at<S: Scalar>(&self, scale: usize, actual_size: usize) -> Vec<(S, S)> {
        let f = actual_size as f64 / self.input_size as f64;
        self.anchor_sizes[scale]
            .iter()
            .map(|&(w, h)| (S::from_f64(w * f), S::from_f64(h * f)))
            .collect()
    }
}

/// One head's raw output map, `[N, anchors * slot_channels, H, W]`.
#[derive(Debug, Clone)]
pub struct RawScale<S> {
    pub stride: usize,
    pub map: Array4<S>,
}

impl<S: Scalar> RawScale<S> {
    pub fn grid(&self) -> (usize, usize) {
        let (_, _, h, w) = self.map.dim();
        (h, w)
    }

    /// Raw slot record `[tx, ty, tw, th, obj, cls...]` for one anchor cell.
    pub fn slot(&self, image: usize, anchor: usize, row: usize, col: usize, fields: usize) -> Vec<S> {
        (0..fields)
            .map(|f| self.map[[image, anchor * fields + f, row, col]])
            .collect()
    }
}

/// Raw network outputs for a batch at both scales, coarse first.
#[derive(Debug, Clone)]
pub struct RawPrediction<S> {
    pub scales: Vec<RawScale<S>>,
}

impl<S: Scalar> RawPrediction<S> {
    pub fn batch_size(&self) -> usize {
        self.scales[0].map.dim().0
    }

    /// Total anchor slots per image across scales.
    pub fn slots_per_image(&self, anchors_per_scale: usize) -> usize {
        self.scales
            .iter()
            .map(|s| {
                let (h, w) = s.grid();
                h * w * anchors_per_scale
            })
            .sum()
    }
}
