//! Explicit Euler integration with zero-order-held inputs.
//!
//! Each input time step is integrated with `unfolds` Euler sub-steps of size
//! `dt`. The input is treated as part of an augmented autonomous state
//! `[x, u]` whose input block has zero derivative, so it leaves every
//! sub-step untouched.

use serde::{Deserialize, Serialize};

use crate::model::{
    derivative_node, output_node, BoundParams, InputMode, ModelError, ModelSpec, ParamName,
    ParameterSet,
};
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Size of one Euler sub-step.
    pub dt: f64,
    /// Sub-steps per input time step.
    pub unfolds: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 0.1,
            unfolds: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(format!(
                "dt must be a positive finite number, got {}",
                self.dt
            ));
        }
        if self.unfolds == 0 {
            return Err("unfolds must be ≥ 1".into());
        }
        Ok(())
    }
}

/// State after integrating one input step: the neuron block and the
/// (unaltered) input block of the augmented system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augmented {
    pub x: NodeId,
    pub u: Option<NodeId>,
}

/// `x + dt·ẋ`.
pub fn euler_step_node(
    tape: &mut Tape,
    spec: &ModelSpec,
    bound: &BoundParams,
    x: NodeId,
    u: Option<NodeId>,
    dt: f64,
) -> Result<NodeId, ModelError> {
    let dx = derivative_node(tape, spec, bound, x, u)?;
    let step = tape.scale(dx, dt);
    Ok(tape.add(x, step)?)
}

/// `cfg.unfolds` Euler sub-steps of `[ẋ, u̇] = [F(x, u), 0]`.
pub fn integrate_timestep_node(
    tape: &mut Tape,
    spec: &ModelSpec,
    bound: &BoundParams,
    x: NodeId,
    u: Option<NodeId>,
    cfg: &SolverConfig,
) -> Result<Augmented, ModelError> {
    let mut x = x;
    for _ in 0..cfg.unfolds {
        x = euler_step_node(tape, spec, bound, x, u, cfg.dt)?;
        // u + dt·0 is u: the input block is carried through as is.
    }
    Ok(Augmented { x, u })
}

/// The `B × N` starting state: the resting potential when the model has
/// one (learnable under `lis`), zeros otherwise. Augmenting coordinates
/// always start at zero.
pub fn initial_state_node(
    tape: &mut Tape,
    spec: &ModelSpec,
    bound: &BoundParams,
    batch: usize,
) -> Result<NodeId, ModelError> {
    let zeros = tape.leaf(Tensor::zeros(batch, spec.state_dim()));
    match bound.get(ParamName::Rest) {
        Some(rest) => Ok(tape.add(zeros, rest)?),
        None => Ok(zeros),
    }
}

/// Records a `B × N` state from a `B × n_neurons` starting batch, appending
/// the augmenting zeros for ANODE.
pub fn explicit_initial_state(
    tape: &mut Tape,
    spec: &ModelSpec,
    x0: &Tensor,
) -> Result<NodeId, ModelError> {
    if x0.cols() != spec.n_neurons {
        return Err(ModelError::InputShape(format!(
            "initial state has {} columns, expected {}",
            x0.cols(),
            spec.n_neurons
        )));
    }
    let visible = tape.leaf(x0.clone());
    if spec.n_augment == 0 {
        return Ok(visible);
    }
    let pad = tape.leaf(Tensor::zeros(x0.rows(), spec.n_augment));
    Ok(tape.concat_cols(visible, pad)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Emit {
    EveryStep,
    Final,
}

#[derive(Debug, Clone, Default)]
pub struct UnrolledNodes {
    pub states: Vec<NodeId>,
    pub outputs: Vec<NodeId>,
}

/// Threads the state through `inputs` (time-major, each `B × m`).
pub fn unroll(
    tape: &mut Tape,
    spec: &ModelSpec,
    bound: &BoundParams,
    x0: NodeId,
    inputs: &[NodeId],
    emit: Emit,
) -> Result<UnrolledNodes, ModelError> {
    if inputs.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    let mut out = UnrolledNodes::default();
    let mut x = x0;
    let last = inputs.len() - 1;
    for (t, &u) in inputs.iter().enumerate() {
        let u = (spec.input_mode != InputMode::None).then_some(u);
        x = integrate_timestep_node(tape, spec, bound, x, u, &spec.solver)?.x;
        if emit == Emit::EveryStep || t == last {
            out.states.push(x);
            out.outputs.push(output_node(tape, spec, bound, x)?);
        }
    }
    Ok(out)
}

/// One Euler step for a single state vector.
pub fn euler_step(
    spec: &ModelSpec,
    params: &ParameterSet,
    x: &[f64],
    u: Option<&[f64]>,
    dt: f64,
) -> Result<Vec<f64>, ModelError> {
    let dx = crate::model::derivative(spec, params, x, u)?;
    Ok(x.iter().zip(&dx).map(|(x, d)| x + dt * d).collect())
}

/// Integrates one input step and returns the augmented state `(x, u)`.
pub fn integrate_timestep(
    spec: &ModelSpec,
    params: &ParameterSet,
    x: &[f64],
    u: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, Option<Vec<f64>>), ModelError> {
    cfg.validate().map_err(ModelError::InvalidSpec)?;
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, spec, params)?;
    let x = single_state(&mut tape, spec, x)?;
    let u = u.map(|u| tape.leaf(Tensor::row(u.to_vec())));
    let out = integrate_timestep_node(&mut tape, spec, &bound, x, u, cfg)?;
    Ok((
        tape.value(out.x).data().to_vec(),
        out.u.map(|u| tape.value(u).data().to_vec()),
    ))
}

fn single_state(tape: &mut Tape, spec: &ModelSpec, x: &[f64]) -> Result<NodeId, ModelError> {
    if x.len() != spec.state_dim() {
        return Err(ModelError::InputShape(format!(
            "x has length {}, expected {}",
            x.len(),
            spec.state_dim()
        )));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite(format!("x[{i}] = {}", x[i])));
    }
    Ok(tape.leaf(Tensor::row(x.to_vec())))
}

/// States (`B × N`) and outputs (`B × n_outputs`) after every input step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Tensor>,
    pub outputs: Vec<Tensor>,
}

/// Runs the model over a time-major input sequence. `x0` is `B × n_neurons`;
/// `None` starts every sample at rest.
pub fn rollout(
    spec: &ModelSpec,
    params: &ParameterSet,
    x0: Option<&Tensor>,
    inputs: &[Tensor],
) -> Result<Trajectory, ModelError> {
    spec.validate()?;
    let first = inputs.first().ok_or(ModelError::EmptySequence)?;
    let batch = first.rows();
    for (t, u) in inputs.iter().enumerate() {
        if u.shape() != (batch, spec.n_inputs) {
            return Err(ModelError::InputShape(format!(
                "input step {t} has shape {:?}, expected {:?}",
                u.shape(),
                (batch, spec.n_inputs)
            )));
        }
        if !u.is_finite() {
            return Err(ModelError::NonFinite(format!("input step {t}")));
        }
    }
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, spec, params)?;
    let x0 = match x0 {
        Some(x0) if x0.rows() != batch => {
            return Err(ModelError::InputShape(format!(
                "initial state has {} rows for a batch of {batch}",
                x0.rows()
            )))
        }
        Some(x0) => explicit_initial_state(&mut tape, spec, x0)?,
        None => initial_state_node(&mut tape, spec, &bound, batch)?,
    };
    let input_ids: Vec<NodeId> = inputs.iter().map(|u| tape.leaf(u.clone())).collect();
    let nodes = unroll(&mut tape, spec, &bound, x0, &input_ids, Emit::EveryStep)?;
    Ok(Trajectory {
        states: nodes
            .states
            .iter()
            .map(|&id| tape.value(id).clone())
            .collect(),
        outputs: nodes
            .outputs
            .iter()
            .map(|&id| tape.value(id).clone())
            .collect(),
    })
}
