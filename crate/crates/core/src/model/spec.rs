use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::solver::SolverConfig;

/// Which right-hand side the solver integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `ẋ = Σ synapses`, no leak.
    NeuralOde,
    /// NeuralODE over a zero-padded state whose first `n_neurons`
    /// coordinates are read out.
    Anode,
    /// Autonomous CT-RNN: `ẋ = Σ synapses − w_l·x`.
    ActRnn,
    /// CT-RNN with a time-varying input.
    CtRnn,
    /// Liquid time-constant network: `C·ẋ = w_l·(e_l − x) + Σ currents`.
    Ltc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => crate::tensor::sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }
}

/// Neural activation shares one activation per presynaptic neuron; synaptic
/// activation gives every synapse its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Wiring {
    NeuralActivation,
    SynapticActivation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    None,
    /// `u·A_in + b_in`
    Linear,
    /// Sensory synapses of the same kind as the recurrent ones.
    Synaptic,
}

/// Synapse parameterization.
///
/// | mode    | conductance of synapse `j → i`      |
/// |---------|-------------------------------------|
/// | `Plain` | `a_ji · σ(w_ji·x_j + b_ji)`         |
/// | `R`     | `w_ji · σ(x_j + b_ji)`              |
/// | `V`     | `w_ji · σ(a_ji·(x_j + b_ji))`       |
///
/// `Plain` keeps the descriptor table's naming, in which `a` is the maximum
/// conductance and `w` the slope; it is the `w·σ(a·x + b)` form with the two
/// names exchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WMode {
    Plain,
    R,
    V,
}

impl WMode {
    /// Whether the mode has an `a` table.
    pub fn has_slope_table(self) -> bool {
        !matches!(self, WMode::R)
    }
}

/// Factor multiplying each synaptic conductance, evaluated at the
/// postsynaptic potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gate {
    /// `1`
    None,
    /// `1 − x_i`
    OneMinus,
    /// `e_ji − x_i`, the LTC driving force.
    Reversal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub activation: Activation,
    pub wiring: Wiring,
    pub input_mode: InputMode,
    pub w_mode: WMode,
    pub gate: Gate,
    /// Learnable resting potential, which is also the initial state.
    pub learnable_rest: bool,
    pub n_neurons: usize,
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub n_augment: usize,
    pub solver: SolverConfig,
}

impl ModelSpec {
    /// An LTC with synaptic activation and `v`-mode synapses.
    pub fn ltc(n_neurons: usize, n_inputs: usize, input_mode: InputMode) -> Self {
        ModelSpec {
            family: Family::Ltc,
            activation: Activation::Sigmoid,
            wiring: Wiring::SynapticActivation,
            input_mode,
            w_mode: WMode::V,
            gate: Gate::Reversal,
            learnable_rest: false,
            n_neurons,
            n_inputs,
            n_outputs: 1,
            n_augment: 0,
            solver: SolverConfig::default(),
        }
    }

    /// A CT-RNN with synaptic activation, sigmoid and `v`-mode synapses.
    pub fn ctrnn(n_neurons: usize, n_inputs: usize, input_mode: InputMode) -> Self {
        ModelSpec {
            family: Family::CtRnn,
            gate: Gate::None,
            ..ModelSpec::ltc(n_neurons, n_inputs, input_mode)
        }
    }

    pub fn with_wiring(mut self, wiring: Wiring) -> Self {
        self.wiring = wiring;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_w_mode(mut self, w_mode: WMode) -> Self {
        self.w_mode = w_mode;
        self
    }

    pub fn with_outputs(mut self, n_outputs: usize) -> Self {
        self.n_outputs = n_outputs;
        self
    }

    pub fn with_solver(mut self, solver: SolverConfig) -> Self {
        self.solver = solver;
        self
    }

    /// Dimension of the integrated state: `n_neurons + n_augment`.
    pub fn state_dim(&self) -> usize {
        self.n_neurons + self.n_augment
    }

    pub fn has_decay(&self) -> bool {
        matches!(self.family, Family::ActRnn | Family::CtRnn | Family::Ltc)
    }

    pub fn has_rest(&self) -> bool {
        self.family == Family::Ltc || (self.has_decay() && self.learnable_rest)
    }

    pub fn is_ltc(&self) -> bool {
        self.family == Family::Ltc
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidSpec(msg));
        if self.n_neurons == 0 {
            return bad("neurons must be ≥ 1".into());
        }
        if self.n_outputs == 0 {
            return bad("outputs must be ≥ 1".into());
        }
        self.solver.validate().map_err(ModelError::InvalidSpec)?;
        match self.family {
            Family::Ltc => {
                if self.activation == Activation::Tanh {
                    return bad(
                        "LTC networks require the sigmoid activation; tanh is unstable".into(),
                    );
                }
                if self.gate != Gate::Reversal {
                    return bad("LTC networks use the reversal-potential gate".into());
                }
            }
            _ if self.gate == Gate::Reversal => {
                return bad(format!(
                    "{} has no reversal potentials; the (e − x) gate is LTC-only",
                    self.family
                ));
            }
            _ => {}
        }
        match (self.family, self.input_mode) {
            (Family::NeuralOde | Family::ActRnn, mode) if mode != InputMode::None => {
                return bad(format!(
                    "{} is autonomous and takes no input mapping",
                    self.family
                ));
            }
            (Family::CtRnn, InputMode::None) => {
                return bad(
                    "ct-rnn needs an input mode; use act-rnn for the autonomous case".into(),
                );
            }
            _ => {}
        }
        match self.input_mode {
            InputMode::None if self.n_inputs != 0 => {
                return bad(format!(
                    "input mode none but {} inputs declared",
                    self.n_inputs
                ));
            }
            InputMode::Linear | InputMode::Synaptic if self.n_inputs == 0 => {
                return bad("inputs must be ≥ 1 when an input mode is set".into());
            }
            _ => {}
        }
        match (self.family, self.n_augment) {
            (Family::Anode, 0) => {
                return bad("anode needs at least one augmenting dimension".into())
            }
            (Family::Anode, _) | (_, 0) => {}
            (family, k) => return bad(format!("{family} cannot carry {k} augmenting dimensions")),
        }
        if self.learnable_rest && !self.has_decay() {
            return bad(format!(
                "{} has no leak term, a learnable rest potential is meaningless",
                self.family
            ));
        }
        Ok(())
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::NeuralOde => "neural-ode",
            Family::Anode => "anode",
            Family::ActRnn => "act-rnn",
            Family::CtRnn => "ct-rnn",
            Family::Ltc => "ltc",
        })
    }
}
