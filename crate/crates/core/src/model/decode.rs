use super::{DetectorConfig, ModelError, RawPrediction, BOX_FIELDS};
use crate::gating::ClassProbabilityVector;
use crate::geometry::BoundingBox;
use crate::scalar::{sigmoid, Scalar};

/// A decoded anchor slot: box in input-image pixels, objectness in `[0, 1]`,
/// and independent per-class probabilities.
#[derive(Debug, Clone)]
pub struct DecodedDetection<S> {
    pub bbox: BoundingBox<S>,
    pub objectness: S,
    pub class_probs: ClassProbabilityVector<S>,
}

/// Decode one anchor slot's raw record.
///
/// `center = (sigmoid(t_xy) + cell) * stride`, `size = anchor * exp(t_wh)`;
/// objectness and class scores pass through the sigmoid.
pub fn decode_slot<S: Scalar>(
    record: &[S],
    cell_row: usize,
    cell_col: usize,
    stride: usize,
    anchor: (S, S),
) -> Option<(BoundingBox<S>, S, Vec<S>)> {
    let stride_s = S::from_usize(stride);
    let half = S::from_f64(0.5);
    let cx = (sigmoid(record[0]) + S::from_usize(cell_col)) * stride_s;
    let cy = (sigmoid(record[1]) + S::from_usize(cell_row)) * stride_s;
    let w = anchor.0 * record[2].exp();
    let h = anchor.1 * record[3].exp();
    let bbox = BoundingBox::new(
        cx - w * half,
        cy - h * half,
        cx + w * half,
        cy + h * half,
    )
    .ok()?;
    let objectness = sigmoid(record[4]);
    let class_probs: Vec<S> = record[BOX_FIELDS..].iter().map(|&l| sigmoid(l)).collect();
    Some((bbox, objectness, class_probs))
}

/// Decode every anchor slot of one image, ordered by
/// (scale, row, column, anchor).
///
/// `actual_size` is the spatial size of the images that produced `raw`;
/// anchors are rescaled from the config's canonical resolution.
pub fn decode<S: Scalar>(
    raw: &RawPrediction<S>,
    config: &DetectorConfig,
    image: usize,
    actual_size: usize,
) -> Result<Vec<DecodedDetection<S>>, ModelError> {
    let fields = config.slot_channels();
    let mut out = Vec::new();
    for (scale_idx, scale) in raw.scales.iter().enumerate() {
        let anchors = config.anchors_at::<S>(scale_idx, actual_size);
        let (h, w) = scale.grid();
        for row in 0..h {
            for col in 0..w {
                for (a, &anchor) in anchors.iter().enumerate() {
                    let record = scale.slot(image, a, row, col, fields);
                    match decode_slot(&record, row, col, scale.stride, anchor) {
                        Some((bbox, objectness, probs))
                            if bbox.x_min.is_finite()
                                && bbox.x_max.is_finite()
                                && bbox.y_min.is_finite()
                                && bbox.y_max.is_finite() =>
                        {
                            out.push(DecodedDetection {
                                bbox,
                                objectness,
                                class_probs: ClassProbabilityVector::new(probs)
                                    .expect("sigmoid output in [0,1]"),
                            });
                        }
                        _ => {
                            return Err(ModelError::NonFiniteDecode {
                                scale: scale_idx,
                                row,
                                col,
                                anchor: a,
                            })
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
