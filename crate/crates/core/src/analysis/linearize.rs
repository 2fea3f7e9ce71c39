//! LTC neurons as state-dependent linear systems.
//!
//! With every conductance `G_ji = g(x_j)` evaluated at the current state,
//!
//! ```text
//! C_i·ẋ_i = −(w_l,i + Σ_j G_ji)·x_i + (w_l,i·e_l,i + Σ_j G_ji·e_ji)
//! ```
//!
//! so each neuron is a linear regression of its own potential whose
//! coefficients are set by its presynaptic neurons and inputs.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::model::{Activation, InputMode, ModelSpec, ParamName, ParameterSet, WMode, Wiring};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationView {
    pub slope: Vec<f64>,
    pub intercept: Vec<f64>,
    /// Sum of the absolute values of every term, used to scale rounding
    /// tolerances.
    pub magnitude: Vec<f64>,
    /// `∂ẋ_i/∂x_k`, including how each conductance moves with its
    /// presynaptic potential.
    pub jacobian: Tensor,
}

impl LinearizationView {
    /// `slope ⊙ x + intercept`.
    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        self.slope
            .iter()
            .zip(&self.intercept)
            .zip(x)
            .map(|((s, c), x)| s * x + c)
            .collect()
    }
}

/// Conductance of one synapse and its derivative w.r.t. the presynaptic
/// potential.
struct Synapse {
    activation: Activation,
    mode: WMode,
}

impl Synapse {
    fn conductance(&self, x: f64, w: f64, a: f64, b: f64) -> (f64, f64) {
        let (z, dz, scale) = match self.mode {
            WMode::Plain => (w * x + b, w, a),
            WMode::R => (x + b, 1.0, w),
            WMode::V => (a * (x + b), a, w),
        };
        let (s, ds) = match self.activation {
            Activation::Sigmoid => {
                let s = crate::tensor::sigmoid(z);
                (s, s * (1.0 - s))
            }
            Activation::Tanh => {
                let t = z.tanh();
                (t, 1.0 - t * t)
            }
        };
        (scale * s, scale * ds * dz)
    }
}

struct Layer<'a> {
    w: &'a Tensor,
    a: Option<&'a Tensor>,
    b: &'a Tensor,
    e: &'a Tensor,
}

fn table<'a>(params: &'a ParameterSet, name: ParamName) -> Result<&'a Tensor, AnalysisError> {
    params.get(name).ok_or(AnalysisError::Model(
        crate::model::ModelError::MissingTable(name),
    ))
}

/// Slope and intercept of every LTC neuron at state `x` and input `u`.
pub fn linearize_at(
    spec: &ModelSpec,
    params: &ParameterSet,
    x: &[f64],
    u: Option<&[f64]>,
) -> Result<LinearizationView, AnalysisError> {
    if !spec.is_ltc() {
        return Err(AnalysisError::NotLtc);
    }
    spec.validate()?;
    params.check_against(spec)?;
    let n = spec.n_neurons;
    if x.len() != n {
        return Err(AnalysisError::Invalid(format!(
            "state has length {}, expected {n}",
            x.len()
        )));
    }
    let u = match (spec.input_mode, u) {
        (InputMode::None, None) => &[][..],
        (InputMode::None, Some(_)) => {
            return Err(AnalysisError::Invalid(
                "autonomous model given an input".into(),
            ))
        }
        (_, Some(u)) if u.len() == spec.n_inputs => u,
        (_, Some(u)) => {
            return Err(AnalysisError::Invalid(format!(
                "input has length {}, expected {}",
                u.len(),
                spec.n_inputs
            )))
        }
        (_, None) => return Err(AnalysisError::Invalid("model expects an input".into())),
    };

    let syn = Synapse {
        activation: spec.activation,
        mode: spec.w_mode,
    };
    let shared = spec.wiring == Wiring::NeuralActivation;
    let leak = table(params, ParamName::Leak)?.data();
    let rest = table(params, ParamName::Rest)?.data();
    let cap = table(params, ParamName::Capacitance)?.data();
    let e_rec = table(params, ParamName::E)?;
    let recurrent = Layer {
        w: table(params, ParamName::W)?,
        a: params.get(ParamName::A),
        b: table(params, ParamName::B)?,
        e: e_rec,
    };
    let sensory = match spec.input_mode {
        InputMode::Synaptic => Some(Layer {
            w: table(params, ParamName::InW)?,
            a: params.get(ParamName::InA),
            b: table(params, ParamName::InB)?,
            e: if shared {
                e_rec
            } else {
                table(params, ParamName::InE)?
            },
        }),
        _ => None,
    };
    let linear_drive: Vec<f64> = match spec.input_mode {
        InputMode::Linear => {
            let a_in = table(params, ParamName::InMatrix)?;
            let b_in = table(params, ParamName::InBias)?.data();
            (0..n)
                .map(|i| {
                    b_in[i]
                        + u.iter()
                            .enumerate()
                            .map(|(k, uk)| uk * a_in.get(k, i))
                            .sum::<f64>()
                })
                .collect()
        }
        _ => vec![0.0; n],
    };

    let mut conductance = vec![0.0; n];
    let mut reversal_sum = vec![0.0; n];
    let mut magnitude = vec![0.0; n];
    let mut jacobian = Tensor::zeros(n, n);
    // (layer, presynaptic values, whether presynaptic values are the state)
    let mut layers = vec![(&recurrent, x, true)];
    if let Some(s) = &sensory {
        layers.push((s, u, false));
    }
    for (layer, pre, recurrent) in layers {
        for (j, &pj) in pre.iter().enumerate() {
            for i in 0..n {
                let per = |t: &Tensor| if shared { t.get(0, j) } else { t.get(j, i) };
                let a = layer.a.map_or(0.0, per);
                let e = if shared {
                    layer.e.get(0, i)
                } else {
                    layer.e.get(j, i)
                };
                let (g, dg) = syn.conductance(pj, layer.w.get(j, i), a, per(layer.b));
                conductance[i] += g;
                reversal_sum[i] += g * e;
                magnitude[i] += (g * e).abs() + (g * x[i]).abs();
                if recurrent {
                    let v = jacobian.get(i, j) + dg * (e - x[i]) / cap[i];
                    jacobian.set(i, j, v);
                }
            }
        }
    }
    let mut slope = vec![0.0; n];
    let mut intercept = vec![0.0; n];
    for i in 0..n {
        slope[i] = -(leak[i] + conductance[i]) / cap[i];
        intercept[i] = (leak[i] * rest[i] + reversal_sum[i] + linear_drive[i]) / cap[i];
        magnitude[i] = (magnitude[i]
            + (leak[i] * rest[i]).abs()
            + (leak[i] * x[i]).abs()
            + linear_drive[i].abs())
            / cap[i];
        let d = jacobian.get(i, i) + slope[i];
        jacobian.set(i, i, d);
    }
    Ok(LinearizationView {
        slope,
        intercept,
        magnitude,
        jacobian,
    })
}
