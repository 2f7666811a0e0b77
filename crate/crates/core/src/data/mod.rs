//! Deterministic synthetic detection data and the preprocessing used in
//! training: scene generation, rasterization, mosaic composition,
//! multi-scale size selection, and COCO-style dataset IO.

mod coco;
mod mosaic;
mod scene;

pub use coco::{read_dataset, write_dataset, DatasetOnDisk};
pub use mosaic::mosaic;
pub use scene::{generate_scene, render, SceneConfig, SceneSpec, ShapeKind, ShapeSpec};

use crate::geometry::BoundingBox;
use crate::scalar::Scalar;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to place object {object} after {retries} retries (seed {seed})")]
    PlacementFailed {
        object: usize,
        retries: usize,
        seed: u64,
    },
    #[error("render size {0} must be a positive multiple of 32")]
    BadRenderSize(usize),
    #[error("mosaic inputs must share one size, got {0:?}")]
    MosaicSizeMismatch(Vec<usize>),
    #[error("multi-scale size set must be non-empty multiples of 32, got {0:?}")]
    BadSizeSet(Vec<usize>),
    #[error("ground-truth box outside image: {0}")]
    BoxOutsideImage(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("annotation file {path}: {message}")]
    Annotation { path: String, message: String },
    #[error("image file {path}: {message}")]
    Image { path: String, message: String },
}

/// One annotated object: a box in pixel coordinates plus its class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject<S> {
    pub bbox: BoundingBox<S>,
    pub class_id: usize,
}

/// One dataset sample: a square image (`[3, H, W]`, values in `[0, 1]`,
/// side divisible by 32) and its objects.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<S> {
    pub image: Array3<S>,
    pub objects: Vec<GroundTruthObject<S>>,
    pub source_id: String,
}

impl<S: Scalar> Sample<S> {
    pub fn size(&self) -> usize {
        self.image.dim().1
    }
}

/// Pick this epoch's training resolution uniformly from `size_set`.
pub fn multiscale_size(rng_seed: u64, size_set: &[usize]) -> Result<usize, DataError> {
    if size_set.is_empty() || size_set.iter().any(|&s| s == 0 || s % 32 != 0) {
        return Err(DataError::BadSizeSet(size_set.to_vec()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(size_set[rng.gen_range(0..size_set.len())])
}

/// Nearest-neighbor resize to a new square side; box coordinates scale
/// affinely.
pub fn resize_sample<S: Scalar>(sample: &Sample<S>, size: usize) -> Result<Sample<S>, DataError> {
    if size == 0 || size % 32 != 0 {
        return Err(DataError::BadRenderSize(size));
    }
    let old = sample.size();
    if old == size {
        return Ok(sample.clone());
    }
    let mut image = Array3::zeros((3, size, size));
    for c in 0..3 {
        for y in 0..size {
            let sy = (y * old) / size;
            for x in 0..size {
                let sx = (x * old) / size;
                image[[c, y, x]] = sample.image[[c, sy, sx]];
            }
        }
    }
    let factor = S::from_usize(size) / S::from_usize(old);
    let objects = sample
        .objects
        .iter()
        .map(|o| GroundTruthObject {
            bbox: o.bbox.scaled(factor),
            class_id: o.class_id,
        })
        .collect();
    Ok(Sample {
        image,
        objects,
        source_id: sample.source_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn multiscale_rejects_bad_sets() {
        assert!(multiscale_size(0, &[]).is_err());
        assert!(multiscale_size(0, &[96, 100]).is_err());
    }

    #[test]
    fn multiscale_full_scale_set_has_ten_values() {
        let set: Vec<usize> = (0..10).map(|i| 320 + 32 * i).collect();
        assert_eq!(set.last(), Some(&608));
        let mut seen = std::collections::HashSet::new();
        for seed in 0..4000 {
            seen.insert(multiscale_size(seed, &set).unwrap());
        }
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn multiscale_singleton_is_constant() {
        for seed in 0..100 {
            assert_eq!(multiscale_size(seed, &[96]).unwrap(), 96);
        }
    }

    #[test]
    fn multiscale_is_roughly_uniform() {
        let set = [64usize, 96, 128, 160];
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for seed in 0..10_000u64 {
            *counts.entry(multiscale_size(seed, &set).unwrap()).or_default() += 1;
        }
        for &s in &set {
            let f = counts[&s] as f64 / 10_000.0;
            assert!((f - 0.25).abs() <= 0.02, "size {s} frequency {f}");
        }
    }
}
