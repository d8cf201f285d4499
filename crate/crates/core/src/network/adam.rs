use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Result};

/// Adam hyper-parameters. The default learning rate is the 3e-5 used for
/// both the main network and the SG modules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, config: AdamConfig) -> Self {
        AdamState {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step(state: &mut AdamState, param: &mut Matrix, grad: &Matrix, name: &str) -> Result<()> {
    if param.shape() != grad.shape() || state.m.shape() != grad.shape() {
        return Err(Error::Shape {
            op: "adam_step",
            left: param.shape(),
            right: grad.shape(),
        });
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.t += 1;
    let c1 = 1.0 - beta1.powf(state.t as f64);
    let c2 = 1.0 - beta2.powf(state.t as f64);
    let (m, v) = (state.m.data_mut(), state.v.data_mut());
    for (((p, &g), mi), vi) in param.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
        *mi = beta1 * *mi + (1.0 - beta1) * g;
        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
        let m_hat = *mi / c1;
        let v_hat = *vi / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// A trainable matrix together with its optimiser state.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub adam: AdamState,
}

impl Param {
    pub fn new(value: Matrix, config: AdamConfig) -> Self {
        let (r, c) = value.shape();
        Param {
            value,
            adam: AdamState::new(r, c, config),
        }
    }

    pub fn step(&mut self, grad: &Matrix, name: &str) -> Result<()> {
        adam_step(&mut self.adam, &mut self.value, grad, name)
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.adam.config.lr = lr;
    }
}
