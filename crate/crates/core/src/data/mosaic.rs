//! Four-image mosaic composition.

use super::{DataError, GroundTruthObject, Sample};
use crate::geometry::BoundingBox;
use crate::scalar::Scalar;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fraction of its original area a clipped box must keep to survive.
const MIN_KEPT_AREA: f64 = 0.25;

/// Compose one sample from four same-sized samples whose crops meet at a
/// random center point (uniform over the middle half of the canvas).
///
/// Destination quadrants are, in source order: top-left, top-right,
/// bottom-left, bottom-right. Each source contributes the region adjacent
/// to the meeting point (its corner block diagonally opposite the
/// destination quadrant's outer corner), so boxes are translated, clipped
/// to their quadrant, and dropped when the clip leaves under 25% of the
/// original area.
pub fn mosaic<S: Scalar>(samples: &[Sample<S>; 4], rng_seed: u64) -> Result<Sample<S>, DataError> {
    let size = samples[0].size();
    if samples.iter().any(|s| s.size() != size) {
        return Err(DataError::MosaicSizeMismatch(
            samples.iter().map(|s| s.size()).collect(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let cx = rng.gen_range(size / 4..=3 * size / 4);
    let cy = rng.gen_range(size / 4..=3 * size / 4);
    Ok(mosaic_at(samples, cx, cy))
}

/// Mosaic with an explicit meeting point; `mosaic` draws the point from the
/// seed and delegates here.
pub(crate) fn mosaic_at<S: Scalar>(samples: &[Sample<S>; 4], cx: usize, cy: usize) -> Sample<S> {
    let size = samples[0].size();
    let mut image = Array3::zeros((3, size, size));
    let mut objects: Vec<GroundTruthObject<S>> = Vec::new();

    // per quadrant: dest rect and the translation applied to source coords
    let quads: [(usize, usize, usize, usize); 4] = [
        (0, cy, 0, cx),       // top-left
        (0, cy, cx, size),    // top-right
        (cy, size, 0, cx),    // bottom-left
        (cy, size, cx, size), // bottom-right
    ];

    for (i, sample) in samples.iter().enumerate() {
        let (y0, y1, x0, x1) = quads[i];
        let (h, w) = (y1 - y0, x1 - x0);
        // source block adjacent to the meeting point
        let (sy0, sx0) = match i {
            0 => (size - h, size - w),
            1 => (size - h, 0),
            2 => (0, size - w),
            _ => (0, 0),
        };
        for c in 0..3 {
            for dy in 0..h {
                for dx in 0..w {
                    image[[c, y0 + dy, x0 + dx]] = sample.image[[c, sy0 + dy, sx0 + dx]];
                }
            }
        }
        let shift_x = x0 as f64 - sx0 as f64;
        let shift_y = y0 as f64 - sy0 as f64;
        let quad = BoundingBox::new(
            S::from_usize(x0),
            S::from_usize(y0),
            S::from_usize(x1),
            S::from_usize(y1),
        )
        .expect("nonempty quadrant");
        for obj in &sample.objects {
            let moved = BoundingBox {
                x_min: obj.bbox.x_min + S::from_f64(shift_x),
                y_min: obj.bbox.y_min + S::from_f64(shift_y),
                x_max: obj.bbox.x_max + S::from_f64(shift_x),
                y_max: obj.bbox.y_max + S::from_f64(shift_y),
            };
            let clipped_x_min = moved.x_min.max(quad.x_min);
            let clipped_y_min = moved.y_min.max(quad.y_min);
            let clipped_x_max = moved.x_max.min(quad.x_max);
            let clipped_y_max = moved.y_max.min(quad.y_max);
            if clipped_x_min >= clipped_x_max || clipped_y_min >= clipped_y_max {
                continue;
            }
            let clipped =
                BoundingBox::new(clipped_x_min, clipped_y_min, clipped_x_max, clipped_y_max)
                    .expect("checked nonempty");
            if clipped.area().as_f64() >= MIN_KEPT_AREA * obj.bbox.area().as_f64() {
                objects.push(GroundTruthObject {
                    bbox: clipped,
                    class_id: obj.class_id,
                });
            }
        }
    }

    Sample {
        image,
        objects,
        source_id: format!(
            "mosaic({},{},{},{})",
            samples[0].source_id, samples[1].source_id, samples[2].source_id, samples[3].source_id
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::scene::{ShapeKind, ShapeSpec};
    use crate::data::{render, SceneSpec};

    fn single_object_sample(center: (f64, f64)) -> Sample<f64> {
        let scene = SceneSpec {
            id: 0,
            canvas_size: 96,
            shapes: vec![ShapeSpec {
                kind: ShapeKind::Square,
                center,
                size: (16.0, 16.0),
                color: (0.9, 0.1, 0.1),
            }],
            background_color: (0.5, 0.5, 0.5),
            noise_sigma: 0.0,
            noise_seed: 0,
        };
        render(&scene, 96).unwrap()
    }

    fn empty_sample() -> Sample<f64> {
        let scene = SceneSpec {
            id: 0,
            canvas_size: 96,
            shapes: vec![],
            background_color: (0.5, 0.5, 0.5),
            noise_sigma: 0.0,
            noise_seed: 0,
        };
        render(&scene, 96).unwrap()
    }

    #[test]
    fn center_meeting_point_keeps_objects_in_kept_quadrants() {
        // each source keeps the block adjacent to the center; with the
        // meeting point at the exact middle that is its inner quadrant
        let samples = [
            single_object_sample((72.0, 72.0)), // BR of source 0 -> dest TL
            single_object_sample((24.0, 72.0)), // BL of source 1 -> dest TR
            single_object_sample((72.0, 24.0)), // TR of source 2 -> dest BL
            single_object_sample((24.0, 24.0)), // TL of source 3 -> dest BR
        ];
        let out = mosaic_at(&samples, 48, 48);
        assert_eq!(out.objects.len(), 4);
        for obj in &out.objects {
            assert!(obj.bbox.inside_image(96.0, 96.0));
        }
        // translated object from source 0: (72,72) center -> (24,24)
        let b = &out.objects[0].bbox;
        assert_eq!((b.x_min, b.y_min), (16.0, 16.0));
    }

    #[test]
    fn four_empty_samples_make_empty_mosaic() {
        let samples = [empty_sample(), empty_sample(), empty_sample(), empty_sample()];
        let out = mosaic(&samples, 3).unwrap();
        assert!(out.objects.is_empty());
    }

    #[test]
    fn same_seed_same_mosaic() {
        let samples = [
            single_object_sample((30.0, 30.0)),
            single_object_sample((60.0, 40.0)),
            single_object_sample((40.0, 60.0)),
            single_object_sample((70.0, 70.0)),
        ];
        let a = mosaic(&samples, 42).unwrap();
        let b = mosaic(&samples, 42).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.objects, b.objects);
    }

    #[test]
    fn clipped_boxes_below_quarter_area_are_dropped() {
        // object hugging source 0's right edge at the vertical middle: after
        // the shift most of it falls outside the top-left quadrant
        let samples = [
            single_object_sample((88.0, 50.0)),
            empty_sample(),
            empty_sample(),
            empty_sample(),
        ];
        // meeting point far left: quadrant TL is cols 0..24, source block is
        // cols 72..96 shifted by -72, so the box lands at x in [8, 24]
        let out = mosaic_at(&samples, 24, 48);
        assert_eq!(out.objects.len(), 1);
        // now meeting point so the surviving sliver is under 25%
        let out = mosaic_at(&samples, 83 - 72, 48);
        assert!(out.objects.is_empty());
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let a = empty_sample();
        let small = crate::data::resize_sample(&a, 64).unwrap();
        let samples = [a.clone(), a.clone(), a, small];
        assert!(matches!(
            mosaic(&samples, 0),
            Err(DataError::MosaicSizeMismatch(_))
        ));
    }
}
