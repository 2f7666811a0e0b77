//! Scalar abstraction: the numeric element type for all tensor math.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::Float;
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point element type: `f32` or `f64`.
pub trait Scalar:
    Float
    + num_traits::NumAssignOps
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Bit width tag used by the checkpoint format.
    const BITS: u8;

    fn from_f64(v: f64) -> Self;
    fn from_usize(v: usize) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const BITS: u8 = 32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn from_usize(v: usize) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const BITS: u8 = 64;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn from_usize(v: usize) -> Self {
        v as f64
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// Logistic sigmoid.
pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Numerically stable binary cross-entropy of a logit against a 0/1 target:
/// `max(x, 0) - x*y + ln(1 + exp(-|x|))`.
pub fn bce_with_logit<S: Scalar>(logit: S, target: S) -> S {
    logit.max(S::zero()) - logit * target + (S::one() + (-logit.abs()).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_midpoint() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(10.0f32) > 0.999);
        assert!(sigmoid(-10.0f32) < 0.001);
    }

    #[test]
    fn bce_matches_naive_form() {
        for &(x, y) in &[(0.0f64, 1.0), (2.5, 0.0), (-3.0, 1.0), (7.0, 1.0)] {
            let p = sigmoid(x);
            let naive = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            assert!((bce_with_logit(x, y) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_stable_for_extreme_logits() {
        assert!(bce_with_logit(500.0f64, 0.0).is_finite());
        assert!(bce_with_logit(-500.0f64, 1.0).is_finite());
        assert!(bce_with_logit(500.0f32, 1.0) >= 0.0);
    }
}
