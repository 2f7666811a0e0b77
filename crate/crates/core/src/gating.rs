//! Sample-selection gating: a decaying per-epoch threshold, a per-instance
//! class error, and the gate decisions that zero classification loss for
//! instances already classified within the error limit.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GatingError {
    #[error("schedule endpoints must satisfy 0 < n_final <= n0 <= 1, got n0={n0}, n_final={n_final}")]
    BadEndpoints { n0: f64, n_final: f64 },
    #[error("total_epochs must be >= 1, got {0}")]
    BadEpochCount(i64),
    #[error("epoch {epoch} outside schedule range [0, {total_epochs}]")]
    EpochOutOfRange { epoch: i64, total_epochs: usize },
    #[error("probability vectors must be non-empty")]
    EmptyVector,
    #[error("probability entry {value} at index {index} outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("probability vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("gate threshold must be nonnegative, got {0}")]
    NegativeThreshold(f64),
    #[error("gate error {value} at index {index} outside [0, 1]")]
    ErrorOutOfRange { index: usize, value: f64 },
}

/// Exponentially decaying selection threshold, pinned at both endpoints:
/// `threshold_at(0) = n0` and `threshold_at(total_epochs) = n_final`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule<S> {
    n0: S,
    n_final: S,
    total_epochs: usize,
    lambda: S,
}

impl<S: Scalar> ThresholdSchedule<S> {
    pub fn n0(&self) -> S {
        self.n0
    }

    pub fn n_final(&self) -> S {
        self.n_final
    }

    pub fn total_epochs(&self) -> usize {
        self.total_epochs
    }

    /// Per-epoch decay constant, `ln(n0 / n_final) / total_epochs`.
    pub fn lambda(&self) -> S {
        self.lambda
    }
}

/// Build a schedule from its two endpoints and the epoch count.
///
/// The decay constant is solved so the curve passes through both endpoints;
/// equal endpoints give a constant schedule.
pub fn make_schedule<S: Scalar>(
    n0: S,
    n_final: S,
    total_epochs: usize,
) -> Result<ThresholdSchedule<S>, GatingError> {
    let zero = S::zero();
    let one = S::one();
    if !(n_final > zero && n_final <= n0 && n0 <= one) {
        return Err(GatingError::BadEndpoints {
            n0: n0.as_f64(),
            n_final: n_final.as_f64(),
        });
    }
    if total_epochs < 1 {
        return Err(GatingError::BadEpochCount(total_epochs as i64));
    }
    let lambda = (n0 / n_final).ln() / S::from_usize(total_epochs);
    Ok(ThresholdSchedule {
        n0,
        n_final,
        total_epochs,
        lambda,
    })
}

/// Threshold at integer epoch `t`: `n0 * exp(-lambda * t)`.
pub fn threshold_at<S: Scalar>(
    schedule: &ThresholdSchedule<S>,
    epoch: usize,
) -> Result<S, GatingError> {
    if epoch > schedule.total_epochs {
        return Err(GatingError::EpochOutOfRange {
            epoch: epoch as i64,
            total_epochs: schedule.total_epochs,
        });
    }
    Ok(schedule.n0 * (-schedule.lambda * S::from_usize(epoch)).exp())
}

/// Per-class probabilities in `[0, 1]`.
///
/// Entries are independent (sigmoid-style) probabilities and need not sum
/// to one; ground-truth vectors are one-hot.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbabilityVector<S> {
    probs: Vec<S>,
}

impl<S: Scalar> ClassProbabilityVector<S> {
    pub fn new(probs: Vec<S>) -> Result<Self, GatingError> {
        if probs.is_empty() {
            return Err(GatingError::EmptyVector);
        }
        for (index, &p) in probs.iter().enumerate() {
            if !(p >= S::zero() && p <= S::one()) {
                return Err(GatingError::ProbabilityOutOfRange {
                    index,
                    value: p.as_f64(),
                });
            }
        }
        Ok(Self { probs })
    }

    /// One-hot vector with `hot` set among `len` classes.
    pub fn one_hot(hot: usize, len: usize) -> Result<Self, GatingError> {
        if len == 0 || hot >= len {
            return Err(GatingError::EmptyVector);
        }
        let mut probs = vec![S::zero(); len];
        probs[hot] = S::one();
        Ok(Self { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.probs
    }
}

/// Largest per-class absolute probability difference (Chebyshev distance).
///
/// This is the error term that gate decisions compare against the
/// schedule's threshold.
pub fn class_error<S: Scalar>(
    truth: &ClassProbabilityVector<S>,
    predicted: &ClassProbabilityVector<S>,
) -> Result<S, GatingError> {
    if truth.len() != predicted.len() {
        return Err(GatingError::LengthMismatch {
            left: truth.len(),
            right: predicted.len(),
        });
    }
    Ok(chebyshev(truth.as_slice(), predicted.as_slice()))
}

/// Unchecked Chebyshev distance over equal-length slices; hot-path form of
/// [`class_error`] for callers that already validated their inputs.
pub(crate) fn chebyshev<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut worst = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = (x - y).abs();
        if d > worst {
            worst = d;
        }
    }
    worst
}

/// One instance's gate outcome: `gated` means its classification loss is
/// dropped this epoch (strictly `error < threshold`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision<S> {
    pub error: S,
    pub threshold: S,
    pub gated: bool,
}

/// Apply the strict `error < threshold` rule to a batch of errors,
/// preserving order.
pub fn gate_mask<S: Scalar>(
    errors: &[S],
    threshold: S,
) -> Result<Vec<GateDecision<S>>, GatingError> {
    if threshold < S::zero() || !threshold.is_finite() {
        return Err(GatingError::NegativeThreshold(threshold.as_f64()));
    }
    let mut out = Vec::with_capacity(errors.len());
    for (index, &error) in errors.iter().enumerate() {
        if !(error >= S::zero() && error <= S::one()) {
            return Err(GatingError::ErrorOutOfRange {
                index,
                value: error.as_f64(),
            });
        }
        out.push(GateDecision {
            error,
            threshold,
            gated: error < threshold,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schedule_from_reference_endpoints() {
        let s = make_schedule(0.5f64, 0.05, 600).unwrap();
        assert!((s.lambda() - 10f64.ln() / 600.0).abs() < 1e-15);
        assert!((s.lambda() - 0.0038376).abs() < 1e-7);
        assert_eq!(threshold_at(&s, 0).unwrap(), 0.5);
        assert!((threshold_at(&s, 600).unwrap() - 0.05).abs() <= 1e-9 * 0.05);
        // geometric midpoint
        assert!((threshold_at(&s, 300).unwrap() - 0.158113883).abs() < 1e-9);
    }

    #[test]
    fn constant_schedule_has_zero_lambda() {
        let s = make_schedule(0.5f64, 0.5, 100).unwrap();
        assert_eq!(s.lambda(), 0.0);
        assert_eq!(threshold_at(&s, 57).unwrap(), 0.5);
    }

    #[test]
    fn full_range_schedule() {
        let s = make_schedule(1.0f64, 0.05, 600).unwrap();
        assert!((s.lambda() - 20f64.ln() / 600.0).abs() < 1e-15);
        assert!((s.lambda() - 0.0049929).abs() < 1e-7);
    }

    #[test]
    fn schedule_rejects_bad_inputs() {
        assert!(make_schedule(0.05f64, 0.5, 10).is_err());
        assert!(make_schedule(0.0f64, 0.0, 10).is_err());
        assert!(make_schedule(-0.1f64, -0.2, 10).is_err());
        assert!(make_schedule(1.5f64, 0.5, 10).is_err());
        assert!(make_schedule(0.5f64, 0.05, 0).is_err());
        let s = make_schedule(0.5f64, 0.05, 10).unwrap();
        assert!(threshold_at(&s, 11).is_err());
    }

    #[test]
    fn thresholds_strictly_decrease() {
        let s = make_schedule(0.5f64, 0.05, 60).unwrap();
        let mut prev = f64::INFINITY;
        for t in 0..=60 {
            let v = threshold_at(&s, t).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn class_error_hand_values() {
        let v = |p: &[f64]| ClassProbabilityVector::new(p.to_vec()).unwrap();
        let e = class_error(&v(&[1.0, 0.0, 0.0]), &v(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(e, 0.0);
        let e = class_error(&v(&[1.0, 0.0, 0.0]), &v(&[0.7, 0.2, 0.1])).unwrap();
        assert!((e - 0.3).abs() < 1e-15);
        let third = 1.0 / 3.0;
        let e = class_error(&v(&[0.0, 0.0, 1.0]), &v(&[third, third, third])).unwrap();
        assert!((e - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn class_error_rejects_bad_vectors() {
        assert!(ClassProbabilityVector::<f64>::new(vec![]).is_err());
        assert!(ClassProbabilityVector::new(vec![0.5, 1.2]).is_err());
        assert!(ClassProbabilityVector::new(vec![-0.1]).is_err());
        let a = ClassProbabilityVector::new(vec![0.5f64]).unwrap();
        let b = ClassProbabilityVector::new(vec![0.5f64, 0.5]).unwrap();
        assert_eq!(
            class_error(&a, &b),
            Err(GatingError::LengthMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn gate_mask_hand_values() {
        let g = gate_mask(&[0.1f64, 0.5, 0.3], 0.3).unwrap();
        assert_eq!(
            g.iter().map(|d| d.gated).collect::<Vec<_>>(),
            vec![true, false, false]
        );
        let g = gate_mask(&[0.0f64, 0.3, 1.0], 0.0).unwrap();
        assert!(g.iter().all(|d| !d.gated));
        let g = gate_mask(&[0.0f64, 1.0], 1.5).unwrap();
        assert!(g.iter().all(|d| d.gated));
    }

    #[test]
    fn gate_mask_rejects_bad_inputs() {
        assert!(gate_mask(&[0.5f64], -0.1).is_err());
        assert!(gate_mask(&[1.5f64], 0.5).is_err());
        assert!(gate_mask(&[-0.5f64], 0.5).is_err());
    }

    #[test]
    fn gate_mask_agrees_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10_000 {
            let error: f64 = rng.gen_range(0.0..=1.0);
            let threshold: f64 = rng.gen_range(0.0..=1.2);
            let got = gate_mask(&[error], threshold).unwrap()[0].gated;
            assert_eq!(got, error < threshold);
        }
    }

    proptest! {
        #[test]
        fn multiplicative_decay(n0 in 0.05f64..1.0, ratio in 0.05f64..1.0, total in 2usize..800,
                                t1 in 0usize..400, t2 in 0usize..400) {
            let n_final = n0 * ratio;
            let s = make_schedule(n0, n_final, total).unwrap();
            prop_assume!(t1 + t2 <= total);
            let lhs = threshold_at(&s, t1 + t2).unwrap() * n0;
            let rhs = threshold_at(&s, t1).unwrap() * threshold_at(&s, t2).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1e-300));
        }

        #[test]
        fn endpoint_exactness(n0 in 0.05f64..1.0, ratio in 0.05f64..1.0, total in 1usize..1000) {
            let n_final = n0 * ratio;
            let s = make_schedule(n0, n_final, total).unwrap();
            prop_assert!((threshold_at(&s, 0).unwrap() - n0).abs() <= 1e-12);
            prop_assert!((threshold_at(&s, total).unwrap() - n_final).abs() <= 1e-9 * n_final);
        }

        #[test]
        fn chebyshev_metric_properties(abc in proptest::collection::vec(
            (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0), 1..40)) {
            let a: Vec<f64> = abc.iter().map(|p| p.0).collect();
            let b: Vec<f64> = abc.iter().map(|p| p.1).collect();
            let c: Vec<f64> = abc.iter().map(|p| p.2).collect();
            let va = ClassProbabilityVector::new(a.clone()).unwrap();
            let vb = ClassProbabilityVector::new(b.clone()).unwrap();
            let vc = ClassProbabilityVector::new(c).unwrap();
            let ab = class_error(&va, &vb).unwrap();
            // symmetry, bounds, identity
            prop_assert_eq!(ab, class_error(&vb, &va).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(class_error(&va, &va).unwrap(), 0.0);
            if ab == 0.0 {
                prop_assert_eq!(a, b);
            }
            // triangle inequality through a third vector
            let ac = class_error(&va, &vc).unwrap();
            let cb = class_error(&vc, &vb).unwrap();
            prop_assert!(ab <= ac + cb + 1e-15);
        }
    }
}
