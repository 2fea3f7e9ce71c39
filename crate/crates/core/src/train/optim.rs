use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::ParameterSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one table per parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ParameterSet, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params
            .tables()
            .iter()
            .map(|t| Tensor::zeros(t.value.rows(), t.value.cols()))
            .collect();
        OptimizerState {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// One bias-corrected Adam update of the trainable tables followed by
    /// the non-negativity projection. Returns the number of clamped
    /// entries. Nothing is modified when a gradient is non-finite.
    pub fn step(
        &mut self,
        params: &mut ParameterSet,
        grads: &[Tensor],
    ) -> Result<usize, TrainError> {
        let tables = params.tables();
        if grads.len() != tables.len() || self.m.len() != tables.len() {
            return Err(TrainError::Invalid(format!(
                "{} gradients and {} moment tables for {} parameter tables",
                grads.len(),
                self.m.len(),
                tables.len()
            )));
        }
        for (table, g) in tables.iter().zip(grads) {
            if g.shape() != table.value.shape() {
                return Err(TrainError::Invalid(format!(
                    "gradient for {} has shape {:?}, table is {:?}",
                    table.name,
                    g.shape(),
                    table.value.shape()
                )));
            }
            if table.trainable && !g.is_finite() {
                return Err(TrainError::NonFiniteGradient(table.name));
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (k, table) in params.tables_mut().iter_mut().enumerate() {
            if !table.trainable {
                continue;
            }
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (((p, &g), m), v) in table
                .value
                .data_mut()
                .iter_mut()
                .zip(grads[k].data())
                .zip(m)
                .zip(v)
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(params.clamp())
    }
}

/// Free-function form of [`OptimizerState::step`].
pub fn adam_step(
    opt: &mut OptimizerState,
    params: &mut ParameterSet,
    grads: &[Tensor],
) -> Result<usize, TrainError> {
    opt.step(params, grads)
}
