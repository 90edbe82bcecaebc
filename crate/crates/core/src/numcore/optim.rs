use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use super::NumError;

/// Hyperparameters of the adaptive-moment optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are kept per parameter, aligned with
/// the [`ParamStore`] order at construction time.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Adam {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, index: usize) -> &Tensor {
        &self.first[index]
    }

    pub fn second_moment(&self, index: usize) -> &Tensor {
        &self.second[index]
    }

    /// Applies one update. Parameters whose gradient is `None` are left
    /// untouched, moments included.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<Tensor>]) -> Result<(), NumError> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(NumError::Shape {
                op: "optimizer_step",
                shapes: vec![vec![params.len()], vec![grads.len()], vec![self.first.len()]],
            });
        }
        for (p, g) in params.tensors().iter().zip(grads) {
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(NumError::Shape {
                        op: "optimizer_step",
                        shapes: vec![p.shape().to_vec(), g.shape().to_vec()],
                    });
                }
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Rescales gradients in place so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Option<Tensor>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .map(Tensor::sq_norm)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let factor = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }
    norm
}
