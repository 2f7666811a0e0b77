use crate::scalar::Scalar;
use ndarray::ArrayD;

/// One learnable tensor with its gradient and momentum buffer.
#[derive(Debug, Clone)]
pub struct Param<S> {
    pub name: String,
    pub data: ArrayD<S>,
    pub grad: ArrayD<S>,
    pub velocity: ArrayD<S>,
    /// Weight decay applies only to conv weights, not to norm params/biases.
    pub decay: bool,
}

impl<S: Scalar> Param<S> {
    pub fn new(name: impl Into<String>, data: ArrayD<S>, decay: bool) -> Self {
        let grad = ArrayD::zeros(data.raw_dim());
        let velocity = ArrayD::zeros(data.raw_dim());
        Self {
            name: name.into(),
            data,
            grad,
            velocity,
            decay,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::zero());
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}
