//! Seeded scene generation and rasterization.

use super::{DataError, GroundTruthObject, Sample};
use crate::geometry::{iou, BoundingBox};
use crate::hash::derive_seed;
use crate::scalar::Scalar;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Shape kinds double as class ids (0 = ellipse, 1 = box, 2 = triangle).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
}

impl ShapeKind {
    pub fn class_id(self) -> usize {
        match self {
            ShapeKind::Circle => 0,
            ShapeKind::Square => 1,
            ShapeKind::Triangle => 2,
        }
    }

    fn from_class(class_id: usize) -> Self {
        match class_id {
            0 => ShapeKind::Circle,
            1 => ShapeKind::Square,
            _ => ShapeKind::Triangle,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Square => "square",
            ShapeKind::Triangle => "triangle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// Center in canvas pixels.
    pub center: (f64, f64),
    /// Tight bounding size (width, height) in canvas pixels.
    pub size: (f64, f64),
    pub color: (f64, f64, f64),
}

impl ShapeSpec {
    pub fn bbox(&self) -> BoundingBox<f64> {
        BoundingBox::new(
            self.center.0 - self.size.0 / 2.0,
            self.center.1 - self.size.1 / 2.0,
            self.center.0 + self.size.0 / 2.0,
            self.center.1 + self.size.1 / 2.0,
        )
        .expect("positive shape size")
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (cx, cy) = self.center;
        let (hw, hh) = (self.size.0 / 2.0, self.size.1 / 2.0);
        match self.kind {
            ShapeKind::Circle => {
                let dx = (x - cx) / hw;
                let dy = (y - cy) / hh;
                dx * dx + dy * dy <= 1.0
            }
            ShapeKind::Square => (x - cx).abs() <= hw && (y - cy).abs() <= hh,
            ShapeKind::Triangle => {
                // up-pointing isoceles triangle inscribed in the box
                let fy = (y - (cy - hh)) / (2.0 * hh);
                if !(0.0..=1.0).contains(&fy) {
                    return false;
                }
                (x - cx).abs() <= hw * fy
            }
        }
    }
}

/// Fully determined scene description; `render` turns it into pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub id: u64,
    pub canvas_size: usize,
    pub shapes: Vec<ShapeSpec>,
    pub background_color: (f64, f64, f64),
    pub noise_sigma: f64,
    /// Seed for the additive pixel noise drawn at render time.
    pub noise_seed: u64,
}

/// Generation knobs for synthetic scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub canvas_size: usize,
    /// Up to three classes, one per shape kind.
    pub num_classes: usize,
    pub objects_min: usize,
    pub objects_max: usize,
    pub size_min: f64,
    pub size_max: f64,
    /// Two placed objects may overlap at most this much.
    pub max_overlap_iou: f64,
    pub noise_sigma: f64,
    pub place_retries: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            canvas_size: 96,
            num_classes: 3,
            objects_min: 1,
            objects_max: 4,
            size_min: 14.0,
            size_max: 42.0,
            max_overlap_iou: 0.3,
            noise_sigma: 0.02,
            place_retries: 100,
        }
    }
}

const PALETTE: [(f64, f64, f64); 3] = [
    (0.85, 0.30, 0.25),
    (0.30, 0.75, 0.35),
    (0.25, 0.40, 0.85),
];

/// Deterministically generate a scene for a seed: object count, classes,
/// sizes, non-overlapping placements, and colors all come from one stream.
pub fn generate_scene(rng_seed: u64, config: &SceneConfig) -> Result<SceneSpec, DataError> {
    assert!(
        (1..=3).contains(&config.num_classes),
        "synthetic scenes support 1..=3 classes"
    );
    assert!(config.objects_min <= config.objects_max);
    assert!(config.size_min > 0.0 && config.size_min <= config.size_max);
    assert!(config.size_max <= config.canvas_size as f64);

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let count = rng.gen_range(config.objects_min..=config.objects_max);
    let mut shapes: Vec<ShapeSpec> = Vec::with_capacity(count);

    for object in 0..count {
        let mut placed = false;
        for _ in 0..config.place_retries {
            let class = rng.gen_range(0..config.num_classes);
            let w = rng.gen_range(config.size_min..=config.size_max);
            let h = rng.gen_range(config.size_min..=config.size_max);
            let cx = rng.gen_range(w / 2.0..=config.canvas_size as f64 - w / 2.0);
            let cy = rng.gen_range(h / 2.0..=config.canvas_size as f64 - h / 2.0);
            let base = PALETTE[class];
            let jitter = |rng: &mut ChaCha8Rng, v: f64| (v + rng.gen_range(-0.06..0.06)).clamp(0.05, 0.95);
            let color = (
                jitter(&mut rng, base.0),
                jitter(&mut rng, base.1),
                jitter(&mut rng, base.2),
            );
            let candidate = ShapeSpec {
                kind: ShapeKind::from_class(class),
                center: (cx, cy),
                size: (w, h),
                color,
            };
            let cb = candidate.bbox();
            if shapes
                .iter()
                .all(|s| iou(&s.bbox(), &cb) <= config.max_overlap_iou)
            {
                shapes.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(DataError::PlacementFailed {
                object,
                retries: config.place_retries,
                seed: rng_seed,
            });
        }
    }

    let g = rng.gen_range(0.45..0.65);
    let background_color = (g, g, g);
    let noise_seed = rng.gen::<u64>();
    Ok(SceneSpec {
        id: rng_seed,
        canvas_size: config.canvas_size,
        shapes,
        background_color,
        noise_sigma: config.noise_sigma,
        noise_seed,
    })
}

/// Rasterize a scene at a target square size (multiple of 32).
///
/// Pixel values are snapped to the 8-bit grid `k/255`, which makes PNG
/// round trips bit-exact. Boxes scale affinely with the render size.
pub fn render<S: Scalar>(scene: &SceneSpec, size: usize) -> Result<Sample<S>, DataError> {
    if size == 0 || size % 32 != 0 {
        return Err(DataError::BadRenderSize(size));
    }
    let f = size as f64 / scene.canvas_size as f64;
    let mut raw = vec![0f64; 3 * size * size];
    let (br, bg, bb) = scene.background_color;
    for y in 0..size {
        for x in 0..size {
            let idx = y * size + x;
            raw[idx] = br;
            raw[size * size + idx] = bg;
            raw[2 * size * size + idx] = bb;
        }
    }
    for shape in &scene.shapes {
        let bbox = shape.bbox().scaled(f);
        let y_lo = bbox.y_min.floor().max(0.0) as usize;
        let y_hi = (bbox.y_max.ceil() as usize).min(size);
        let x_lo = bbox.x_min.floor().max(0.0) as usize;
        let x_hi = (bbox.x_max.ceil() as usize).min(size);
        for y in y_lo..y_hi {
            let cy = (y as f64 + 0.5) / f;
            for x in x_lo..x_hi {
                let cx = (x as f64 + 0.5) / f;
                if shape.contains(cx, cy) {
                    let idx = y * size + x;
                    raw[idx] = shape.color.0;
                    raw[size * size + idx] = shape.color.1;
                    raw[2 * size * size + idx] = shape.color.2;
                }
            }
        }
    }
    if scene.noise_sigma > 0.0 {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(scene.noise_seed, "render", &[size as u64]));
        for v in raw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += z * scene.noise_sigma;
        }
    }

    let mut image = Array3::zeros((3, size, size));
    {
        let flat = image.as_slice_mut().unwrap();
        for (dst, &v) in flat.iter_mut().zip(raw.iter()) {
            let q = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
            *dst = S::from_f64(q);
        }
    }

    let objects = scene
        .shapes
        .iter()
        .map(|s| {
            let b = s.bbox().scaled(f);
            GroundTruthObject {
                bbox: BoundingBox::new(
                    S::from_f64(b.x_min),
                    S::from_f64(b.y_min),
                    S::from_f64(b.x_max),
                    S::from_f64(b.y_max),
                )
                .expect("scaled box stays valid"),
                class_id: s.kind.class_id(),
            }
        })
        .collect();

    Ok(Sample {
        image,
        objects,
        source_id: format!("scene-{:016x}", scene.id),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let cfg = SceneConfig::default();
        let a = generate_scene(1234, &cfg).unwrap();
        let b = generate_scene(1234, &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_scene(1235, &cfg).unwrap());
    }

    #[test]
    fn zero_objects_gives_empty_scene() {
        let cfg = SceneConfig {
            objects_min: 0,
            objects_max: 0,
            ..SceneConfig::default()
        };
        let s = generate_scene(5, &cfg).unwrap();
        assert!(s.shapes.is_empty());
    }

    #[test]
    fn generated_scenes_respect_overlap_budget() {
        let cfg = SceneConfig::default();
        for seed in 0..1000 {
            let s = generate_scene(seed, &cfg).unwrap();
            for i in 0..s.shapes.len() {
                for j in (i + 1)..s.shapes.len() {
                    let overlap = iou(&s.shapes[i].bbox(), &s.shapes[j].bbox());
                    assert!(overlap <= cfg.max_overlap_iou + 1e-12);
                }
            }
        }
    }

    #[test]
    fn render_scales_boxes_exactly() {
        let cfg = SceneConfig::default();
        let scene = generate_scene(7, &cfg).unwrap();
        let small: Sample<f64> = render(&scene, 96).unwrap();
        let large: Sample<f64> = render(&scene, 192).unwrap();
        for (a, b) in small.objects.iter().zip(large.objects.iter()) {
            assert!((a.bbox.x_min * 2.0 - b.bbox.x_min).abs() < 1e-9);
            assert!((a.bbox.y_max * 2.0 - b.bbox.y_max).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_render_is_bitwise_deterministic() {
        let cfg = SceneConfig {
            noise_sigma: 0.0,
            ..SceneConfig::default()
        };
        let scene = generate_scene(21, &cfg).unwrap();
        let a: Sample<f32> = render(&scene, 96).unwrap();
        let b: Sample<f32> = render(&scene, 96).unwrap();
        assert_eq!(a.image, b.image);
    }

    #[test]
    fn hand_placed_square_has_expected_box() {
        let scene = SceneSpec {
            id: 0,
            canvas_size: 96,
            shapes: vec![ShapeSpec {
                kind: ShapeKind::Square,
                center: (48.0, 48.0),
                size: (20.0, 20.0),
                color: (0.2, 0.8, 0.2),
            }],
            background_color: (0.5, 0.5, 0.5),
            noise_sigma: 0.0,
            noise_seed: 0,
        };
        let sample: Sample<f64> = render(&scene, 96).unwrap();
        let b = sample.objects[0].bbox;
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (38.0, 38.0, 58.0, 58.0));
    }

    #[test]
    fn rasterized_extent_matches_gt_box_within_one_pixel() {
        let cfg = SceneConfig {
            noise_sigma: 0.0,
            objects_min: 1,
            objects_max: 1,
            ..SceneConfig::default()
        };
        for seed in 0..50 {
            let scene = generate_scene(seed, &cfg).unwrap();
            let sample: Sample<f64> = render(&scene, 96).unwrap();
            let shape = &scene.shapes[0];
            let gt = &sample.objects[0].bbox;
            // scan for pixels that differ from the background
            let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
            for y in 0..96 {
                for x in 0..96 {
                    let px = (
                        sample.image[[0, y, x]],
                        sample.image[[1, y, x]],
                        sample.image[[2, y, x]],
                    );
                    let bgq = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
                    let bg = (
                        bgq(scene.background_color.0),
                        bgq(scene.background_color.1),
                        bgq(scene.background_color.2),
                    );
                    if px != bg {
                        x0 = x0.min(x);
                        y0 = y0.min(y);
                        x1 = x1.max(x + 1);
                        y1 = y1.max(y + 1);
                    }
                }
            }
            assert!(x0 < x1, "shape {:?} rendered no pixels", shape.kind);
            assert!((x0 as f64 - gt.x_min).abs() <= 1.0, "kind {:?}", shape.kind);
            assert!((y0 as f64 - gt.y_min).abs() <= 1.0, "kind {:?}", shape.kind);
            assert!((x1 as f64 - gt.x_max).abs() <= 1.0, "kind {:?}", shape.kind);
            assert!((y1 as f64 - gt.y_max).abs() <= 1.0, "kind {:?}", shape.kind);
        }
    }
}
