use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use super::KernelError;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), KernelError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(KernelError::InvalidLearningRate(self.learning_rate));
        }
        Ok(())
    }
}

/// Per-parameter moment estimates.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub first_moment: Tensor<T>,
    pub second_moment: Tensor<T>,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl<T: Real> AdamState<T> {
    pub fn new(shape: &[usize], config: AdamConfig) -> Result<Self, KernelError> {
        config.validate()?;
        Ok(Self {
            first_moment: Tensor::zeros(shape),
            second_moment: Tensor::zeros(shape),
            step_count: 0,
            config,
        })
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step<T: Real>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut AdamState<T>,
) -> Result<(), KernelError> {
    state.config.validate()?;
    if param.shape() != grad.shape() || param.shape() != state.first_moment.shape() {
        return Err(KernelError::ShapeMismatch {
            op: "adam_step",
            left: param.shape().to_vec(),
            right: grad.shape().to_vec(),
        });
    }
    state.step_count += 1;
    let c = state.config;
    let t = state.step_count as i32;
    let b1 = T::of_f64(c.beta1);
    let b2 = T::of_f64(c.beta2);
    let one = T::one();
    let bias1 = T::of_f64(1.0 - c.beta1.powi(t));
    let bias2 = T::of_f64(1.0 - c.beta2.powi(t));
    let lr = T::of_f64(c.learning_rate);
    let eps = T::of_f64(c.eps);

    let m = state.first_moment.data_mut();
    let v = state.second_moment.data_mut();
    for (((p, &g), m), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
