//! Right-hand sides of every model family, recorded on a [`Tape`].
//!
//! All families share one composition:
//!
//! ```text
//! ẋ = Σ recurrent synapses + input term − decay          (neural-ode, act-rnn, ct-rnn)
//! C·ẋ = w_l ⊙ (e_l − x) + Σ recurrent currents + input   (ltc)
//! ```
//!
//! States are `B × N` with one sample per row, so one tape integrates a
//! whole mini-batch.

use std::collections::HashMap;
use std::sync::Arc;

use super::params::{ParamName, ParameterSet};
use super::spec::{Activation, Family, Gate, InputMode, ModelSpec, WMode, Wiring};
use super::synapse::SynapseKernel;
use super::ModelError;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// Parameter tables recorded as tape leaves, plus the tables each synapse
/// layer reads.
#[derive(Debug, Clone)]
pub struct BoundParams {
    leaves: Vec<(ParamName, NodeId)>,
    recurrent: SynapseView,
    input: Option<SynapseView>,
}

/// Tables for one synapse layer. `flat` layers run the fused per-synapse
/// kernel. Otherwise (neural activation in the `r`/`v` modes) the activation
/// depends only on the presynaptic neuron and the sum over `j` is a matrix
/// product.
#[derive(Debug, Clone, Copy)]
struct SynapseView {
    flat: bool,
    w: NodeId,
    a: Option<NodeId>,
    b: NodeId,
    e: Option<NodeId>,
}

impl BoundParams {
    /// Records every table of `params` on `tape`.
    pub fn bind(
        tape: &mut Tape,
        spec: &ModelSpec,
        params: &ParameterSet,
    ) -> Result<Self, ModelError> {
        params.check_against(spec)?;
        let leaves: Vec<(ParamName, NodeId)> = params
            .tables()
            .iter()
            .map(|t| (t.name, tape.leaf(t.value.clone())))
            .collect();
        let lookup: HashMap<ParamName, NodeId> = leaves.iter().copied().collect();
        let recurrent = SynapseView::build(
            spec,
            lookup[&ParamName::W],
            lookup.get(&ParamName::A).copied(),
            lookup[&ParamName::B],
            lookup.get(&ParamName::E).copied(),
        );
        let input = match spec.input_mode {
            InputMode::Synaptic => {
                let e = match spec.wiring {
                    Wiring::SynapticActivation => lookup.get(&ParamName::InE).copied(),
                    Wiring::NeuralActivation => lookup.get(&ParamName::E).copied(),
                };
                Some(SynapseView::build(
                    spec,
                    lookup[&ParamName::InW],
                    lookup.get(&ParamName::InA).copied(),
                    lookup[&ParamName::InB],
                    e,
                ))
            }
            _ => None,
        };
        Ok(BoundParams {
            leaves,
            recurrent,
            input,
        })
    }

    pub fn get(&self, name: ParamName) -> Option<NodeId> {
        self.leaves
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, id)| *id)
    }

    fn require(&self, name: ParamName) -> Result<NodeId, ModelError> {
        self.get(name).ok_or(ModelError::MissingTable(name))
    }

    /// Leaf ids in the parameter set's table order.
    pub fn leaves(&self) -> &[(ParamName, NodeId)] {
        &self.leaves
    }
}

impl SynapseView {
    fn build(spec: &ModelSpec, w: NodeId, a: Option<NodeId>, b: NodeId, e: Option<NodeId>) -> Self {
        let flat = spec.wiring == Wiring::SynapticActivation || spec.w_mode == WMode::Plain;
        SynapseView { flat, w, a, b, e }
    }
}

fn activate(tape: &mut Tape, activation: Activation, x: NodeId) -> NodeId {
    match activation {
        Activation::Sigmoid => tape.sigmoid(x),
        Activation::Tanh => tape.tanh(x),
    }
}

/// `Σ_j conductance(pre_j) · gate(post_i)` for every postsynaptic `i`.
fn synapse_current(
    tape: &mut Tape,
    spec: &ModelSpec,
    view: &SynapseView,
    pre: NodeId,
    post: NodeId,
) -> Result<NodeId, ModelError> {
    let slope = || view.a.ok_or(ModelError::MissingTable(ParamName::A));
    if view.flat {
        let kernel = SynapseKernel::new(
            spec.w_mode,
            spec.activation,
            spec.gate,
            spec.wiring == Wiring::NeuralActivation,
        );
        let mut inputs = vec![pre, post, view.w, view.b];
        if spec.w_mode != WMode::R {
            inputs.push(slope()?);
        }
        if spec.gate == Gate::Reversal {
            inputs.push(view.e.ok_or(ModelError::MissingTable(ParamName::E))?);
        }
        Ok(tape.custom(Arc::new(kernel), &inputs)?)
    } else {
        let arg = match spec.w_mode {
            WMode::R => tape.add(pre, view.b)?,
            WMode::V => {
                let shifted = tape.add(pre, view.b)?;
                tape.mul(shifted, slope()?)?
            }
            WMode::Plain => unreachable!("plain mode always uses the flat layout"),
        };
        let act = activate(tape, spec.activation, arg);
        let summed = tape.matmul(act, view.w)?;
        Ok(match spec.gate {
            Gate::None => summed,
            Gate::OneMinus => {
                let factor = tape.affine(post, -1.0, 1.0);
                tape.mul(summed, factor)?
            }
            Gate::Reversal => {
                let e = view.e.ok_or(ModelError::MissingTable(ParamName::E))?;
                let drive = tape.sub(e, post)?;
                tape.mul(summed, drive)?
            }
        })
    }
}

/// Contribution of the input layer to `ẋ` (linear map or sensory synapses).
pub fn input_term(
    tape: &mut Tape,
    spec: &ModelSpec,
    bound: &BoundParams,
    u: NodeId,
    x: NodeId,
) -> Result<Option<NodeId>, ModelError> {
    let expected = (tape.shape(x).0, spec.n_inputs);
    match spec.input_mode {
        InputMode::None => Ok(None),
        _ if tape.shape(u) != expected => Err(ModelError::InputShape(format!(
            "input batch has shape {:?}, expected {expected:?}",
            tape.shape(u)
        ))),
        InputMode::Linear => {
            let mapped = tape.matmul(u, bound.require(ParamName::InMatrix)?)?;
            Ok(Some(tape.add(mapped, bound.require(ParamName::InBias)?)?))
        }
        InputMode::Synaptic => {
            let view = bound
                .input
                .as_ref()
                .ok_or(ModelError::MissingTable(ParamName::InW))?;
            Ok(Some(synapse_current(tape, spec, view, u, x)?))
        }
    }
}

/// Records `ẋ` for a `B × N` state batch and optional `B × m` input batch.
pub fn derivative_node(
    tape: &mut Tape,
    spec: &ModelSpec,
    bound: &BoundParams,
    x: NodeId,
    u: Option<NodeId>,
) -> Result<NodeId, ModelError> {
    let n = spec.state_dim();
    if tape.shape(x).1 != n {
        return Err(ModelError::InputShape(format!(
            "state has {} columns, the model integrates {n}",
            tape.shape(x).1
        )));
    }
    let synapses = synapse_current(tape, spec, &bound.recurrent, x, x)?;
    let input = match (spec.input_mode, u) {
        (InputMode::None, _) => None,
        (_, Some(u)) => input_term(tape, spec, bound, u, x)?,
        (_, None) => {
            return Err(ModelError::InputShape(
                "model expects an input vector".into(),
            ))
        }
    };
    let drive = match input {
        Some(inp) => tape.add(synapses, inp)?,
        None => synapses,
    };
    Ok(match spec.family {
        Family::NeuralOde | Family::Anode => drive,
        Family::ActRnn | Family::CtRnn => {
            let leak = bound.require(ParamName::Leak)?;
            let displaced = match bound.get(ParamName::Rest) {
                Some(rest) => tape.sub(x, rest)?,
                None => x,
            };
            let decay = tape.mul(displaced, leak)?;
            tape.sub(drive, decay)?
        }
        Family::Ltc => {
            let leak = bound.require(ParamName::Leak)?;
            let rest = bound.require(ParamName::Rest)?;
            let to_rest = tape.sub(rest, x)?;
            let leak_current = tape.mul(to_rest, leak)?;
            let total = tape.add(leak_current, drive)?;
            tape.div(total, bound.require(ParamName::Capacitance)?)?
        }
    })
}

/// Readout `A_out·x + b_out` over the first `n_neurons` state coordinates.
pub fn output_node(
    tape: &mut Tape,
    spec: &ModelSpec,
    bound: &BoundParams,
    x: NodeId,
) -> Result<NodeId, ModelError> {
    let visible = if spec.n_augment > 0 {
        tape.slice_cols(x, 0, spec.n_neurons)?
    } else {
        x
    };
    let mapped = tape.matmul(visible, bound.require(ParamName::OutMatrix)?)?;
    Ok(tape.add(mapped, bound.require(ParamName::OutBias)?)?)
}

fn check_finite(what: &str, values: &[f64]) -> Result<(), ModelError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(ModelError::NonFinite(format!(
            "{what}[{i}] = {}",
            values[i]
        ))),
        None => Ok(()),
    }
}

fn single_row(what: &str, values: &[f64], len: usize) -> Result<Tensor, ModelError> {
    if values.len() != len {
        return Err(ModelError::InputShape(format!(
            "{what} has length {}, expected {len}",
            values.len()
        )));
    }
    check_finite(what, values)?;
    Ok(Tensor::row(values.to_vec()))
}

/// `ẋ` for one state vector, evaluated on a scratch tape.
pub fn derivative(
    spec: &ModelSpec,
    params: &ParameterSet,
    x: &[f64],
    u: Option<&[f64]>,
) -> Result<Vec<f64>, ModelError> {
    spec.validate()?;
    let x = single_row("x", x, spec.state_dim())?;
    let u = match (spec.input_mode, u) {
        (InputMode::None, None) => None,
        (InputMode::None, Some(_)) => {
            return Err(ModelError::InputShape(
                "autonomous model given an input".into(),
            ))
        }
        (_, Some(u)) => Some(single_row("u", u, spec.n_inputs)?),
        (_, None) => {
            return Err(ModelError::InputShape(
                "model expects an input vector".into(),
            ))
        }
    };
    let d = derivative_batch(spec, params, &x, u.as_ref())?;
    Ok(d.into_data())
}

/// `ẋ` for a `B × N` batch of states.
pub fn derivative_batch(
    spec: &ModelSpec,
    params: &ParameterSet,
    x: &Tensor,
    u: Option<&Tensor>,
) -> Result<Tensor, ModelError> {
    if let Some(name) = params.first_non_finite() {
        return Err(ModelError::NonFinite(format!("parameter table {name}")));
    }
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, spec, params)?;
    let x = tape.leaf(x.clone());
    let u = u.map(|u| tape.leaf(u.clone()));
    let d = derivative_node(&mut tape, spec, &bound, x, u)?;
    Ok(tape.value(d).clone())
}

/// Input-layer contribution for one sample. Sensory LTC synapses are gated by
/// the postsynaptic potential, hence the state argument.
pub fn input_map(
    spec: &ModelSpec,
    params: &ParameterSet,
    u: &[f64],
    x: &[f64],
) -> Result<Vec<f64>, ModelError> {
    let u = single_row("u", u, spec.n_inputs)?;
    let x = single_row("x", x, spec.state_dim())?;
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, spec, params)?;
    let (u, x) = (tape.leaf(u), tape.leaf(x));
    Ok(match input_term(&mut tape, spec, &bound, u, x)? {
        Some(id) => tape.value(id).data().to_vec(),
        None => vec![0.0; spec.state_dim()],
    })
}

pub fn output_map(
    spec: &ModelSpec,
    params: &ParameterSet,
    x: &[f64],
) -> Result<Vec<f64>, ModelError> {
    let x = single_row("x", x, spec.state_dim())?;
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, spec, params)?;
    let x = tape.leaf(x);
    let y = output_node(&mut tape, spec, &bound, x)?;
    Ok(tape.value(y).data().to_vec())
}

/// `[x, 0, …, 0]` with `n_augment` trailing zeros.
pub fn anode_wrap(x0: &[f64], n_augment: usize) -> Result<Vec<f64>, ModelError> {
    if n_augment == 0 {
        return Err(ModelError::InvalidSpec(
            "anode needs at least one augmenting dimension".into(),
        ));
    }
    let mut out = x0.to_vec();
    out.resize(x0.len() + n_augment, 0.0);
    Ok(out)
}

/// Selects the coordinates listed in `selector`, in order.
pub fn anode_project(x: &[f64], selector: &[usize]) -> Result<Vec<f64>, ModelError> {
    selector
        .iter()
        .map(|&i| {
            x.get(i).copied().ok_or(ModelError::Selector {
                index: i,
                len: x.len(),
            })
        })
        .collect()
}
