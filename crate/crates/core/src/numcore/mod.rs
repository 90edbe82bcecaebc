//! Dense tensors, reverse-mode autodiff, Adam, and the checkpoint format.

mod checkpoint;
mod graph;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointError, DType};
pub use graph::{CustomOp, Gradients, Graph, Var};
pub use optim::{clip_global_norm, Adam, AdamConfig};
pub use params::{ParamId, ParamStore};
pub use tensor::{logsumexp, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("shape mismatch in {op}: {shapes:?}")]
    Shape {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("loss must be scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("missing parameter {0:?}")]
    MissingParam(String),
}

/// Central-difference gradient of a scalar function of `x`.
///
/// Used by the gradient-check tests; kept here so every module checks
/// against the same oracle.
pub fn finite_difference<F>(x: &Tensor, h: f64, mut f: F) -> Tensor
where
    F: FnMut(&Tensor) -> f64,
{
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Max elementwise relative error, with an absolute floor so entries near
/// zero do not dominate.
pub fn max_relative_error(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
