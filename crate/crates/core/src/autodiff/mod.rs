//! Small eager reverse-mode differentiation engine over the primitives the
//! forward model and the mask generators need.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, sample_indices, write_grad_csv, GradProbe, GradReport};
pub use tape::{NodeId, Op, Tape};
pub use tensor::{Shape, Tensor};

/// Inputs are clamped to this magnitude before the logistic function so that
/// outputs stay strictly inside (0, 1) in double precision.
pub const SIGMOID_GUARD: f64 = 30.0;
/// Same for tanh and (-1, 1).
pub const TANH_GUARD: f64 = 18.0;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-SIGMOID_GUARD, SIGMOID_GUARD)).exp())
}

pub fn tanh_bounded(x: f64) -> f64 {
    x.clamp(-TANH_GUARD, TANH_GUARD).tanh()
}

pub(crate) fn sigmoid_grad(x: f64) -> f64 {
    if x.abs() > SIGMOID_GUARD {
        return 0.0;
    }
    let s = sigmoid(x);
    s * (1.0 - s)
}

pub(crate) fn tanh_grad(x: f64) -> f64 {
    if x.abs() > TANH_GUARD {
        return 0.0;
    }
    let t = x.tanh();
    1.0 - t * t
}

/// Inverse of [`sigmoid`] on (0, 1).
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
