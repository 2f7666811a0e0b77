//! Axis-aligned boxes and the overlap measures built on them.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid box: min corner ({x_min}, {y_min}) must be strictly below max corner ({x_max}, {y_max})")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
}

/// Axis-aligned bounding box in pixel coordinates, corner form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<S> {
    pub x_min: S,
    pub y_min: S,
    pub x_max: S,
    pub y_max: S,
}

impl<S: Scalar> BoundingBox<S> {
    /// Build a box, rejecting degenerate or inverted corners.
    pub fn new(x_min: S, y_min: S, x_max: S, y_max: S) -> Result<Self, GeometryError> {
        if !(x_min < x_max && y_min < y_max)
            || !(x_min.is_finite() && y_min.is_finite() && x_max.is_finite() && y_max.is_finite())
        {
            return Err(GeometryError::InvalidBox {
                x_min: x_min.as_f64(),
                y_min: y_min.as_f64(),
                x_max: x_max.as_f64(),
                y_max: y_max.as_f64(),
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Box from COCO-style `[x, y, w, h]`.
    pub fn from_xywh(x: S, y: S, w: S, h: S) -> Result<Self, GeometryError> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> S {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> S {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> S {
        self.width() * self.height()
    }

    pub fn center(&self) -> (S, S) {
        let half = S::from_f64(0.5);
        (
            (self.x_min + self.x_max) * half,
            (self.y_min + self.y_max) * half,
        )
    }

    /// Intersection area with another box; zero when disjoint.
    pub fn intersection_area(&self, other: &Self) -> S {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(S::zero());
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(S::zero());
        w * h
    }

    /// True when the box lies inside `[0, width] x [0, height]`.
    pub fn inside_image(&self, width: S, height: S) -> bool {
        self.x_min >= S::zero() && self.y_min >= S::zero() && self.x_max <= width && self.y_max <= height
    }

    /// Uniformly scale all coordinates.
    pub fn scaled(&self, factor: S) -> Self {
        Self {
            x_min: self.x_min * factor,
            y_min: self.y_min * factor,
            x_max: self.x_max * factor,
            y_max: self.y_max * factor,
        }
    }
}

/// Intersection over union. Zero for disjoint boxes.
pub fn iou<S: Scalar>(a: &BoundingBox<S>, b: &BoundingBox<S>) -> S {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= S::zero() {
        S::zero()
    } else {
        inter / union
    }
}

/// Generalized IoU: `IoU - (area(enclosing) - area(union)) / area(enclosing)`.
///
/// Ranges over `(-1, 1]`; equals IoU when one box's hull is the union.
pub fn giou<S: Scalar>(a: &BoundingBox<S>, b: &BoundingBox<S>) -> S {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let enclosing = (a.x_max.max(b.x_max) - a.x_min.min(b.x_min))
        * (a.y_max.max(b.y_max) - a.y_min.min(b.y_min));
    let iou = if union <= S::zero() {
        S::zero()
    } else {
        inter / union
    };
    if enclosing <= S::zero() {
        return iou;
    }
    iou - (enclosing - union) / enclosing
}

/// IoU of two box *shapes* `(w, h)` as if concentric; used for anchor matching.
pub fn shape_iou<S: Scalar>(w1: S, h1: S, w2: S, h2: S) -> S {
    let inter = w1.min(w2) * h1.min(h2);
    let union = w1 * h1 + w2 * h2 - inter;
    if union <= S::zero() {
        S::zero()
    } else {
        inter / union
    }
}

/// Gradient of `giou(pred, target)` with respect to the four corners of `pred`.
///
/// Piecewise-smooth; at min/max ties this returns one of the valid
/// one-sided derivatives, which is what the training step needs.
pub fn giou_grad<S: Scalar>(pred: &BoundingBox<S>, target: &BoundingBox<S>) -> [S; 4] {
    let zero = S::zero();

    let iw = pred.x_max.min(target.x_max) - pred.x_min.max(target.x_min);
    let ih = pred.y_max.min(target.y_max) - pred.y_min.max(target.y_min);
    let overlap = iw > zero && ih > zero;
    let inter = if overlap { iw * ih } else { zero };

    let area_p = pred.area();
    let union = area_p + target.area() - inter;

    let ew = pred.x_max.max(target.x_max) - pred.x_min.min(target.x_min);
    let eh = pred.y_max.max(target.y_max) - pred.y_min.min(target.y_min);
    let enclosing = ew * eh;

    // d(inter)/d corner: nonzero only when the pred edge is the binding one.
    let (di_dx0, di_dx1, di_dy0, di_dy1) = if overlap {
        (
            if pred.x_min > target.x_min { -ih } else { zero },
            if pred.x_max < target.x_max { ih } else { zero },
            if pred.y_min > target.y_min { -iw } else { zero },
            if pred.y_max < target.y_max { iw } else { zero },
        )
    } else {
        (zero, zero, zero, zero)
    };

    // d(area_p)/d corner.
    let w = pred.width();
    let h = pred.height();
    let da = [-h, h, -w, w];
    let di = [di_dx0, di_dx1, di_dy0, di_dy1];

    // d(enclosing)/d corner: nonzero only when the pred edge is the outer one.
    let de = [
        if pred.x_min < target.x_min { -eh } else { zero },
        if pred.x_max > target.x_max { eh } else { zero },
        if pred.y_min < target.y_min { -ew } else { zero },
        if pred.y_max > target.y_max { ew } else { zero },
    ];

    let mut out = [zero; 4];
    let u2 = union * union;
    let c2 = enclosing * enclosing;
    for k in 0..4 {
        let du = da[k] - di[k];
        // IoU term: (dI * U - I * dU) / U^2
        let diou = (di[k] * union - inter * du) / u2;
        // penalty term: d[(C - U)/C] = (dC*U - dU*C)/C^2 ... expanded from
        // giou = iou - 1 + U/C  =>  d = diou + (dU*C - U*dC)/C^2
        let dpen = (du * enclosing - union * de[k]) / c2;
        out[k] = diou + dpen;
    }
    out
}
