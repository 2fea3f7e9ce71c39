use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::{Family, InputMode, ModelSpec, Wiring};
use super::ModelError;
use crate::tensor::Tensor;

/// Names of every parameter table a model can own.
///
/// Synapse tables are laid out `pre × post`: entry `(j, i)` belongs to the
/// synapse from neuron (or input) `j` onto neuron `i`. Per-neuron tables are
/// `1 × N` rows. Under neural activation the slope and bias tables shrink to
/// one entry per presynaptic neuron and the reversal potential to one entry
/// per postsynaptic neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamName {
    #[serde(rename = "w")]
    W,
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "e")]
    E,
    #[serde(rename = "w_l")]
    Leak,
    #[serde(rename = "e_l")]
    Rest,
    #[serde(rename = "C")]
    Capacitance,
    #[serde(rename = "in_w")]
    InW,
    #[serde(rename = "in_a")]
    InA,
    #[serde(rename = "in_b")]
    InB,
    #[serde(rename = "in_e")]
    InE,
    #[serde(rename = "A_in")]
    InMatrix,
    #[serde(rename = "b_in")]
    InBias,
    #[serde(rename = "A_out")]
    OutMatrix,
    #[serde(rename = "b_out")]
    OutBias,
}

impl ParamName {
    pub const ALL: [ParamName; 15] = [
        ParamName::W,
        ParamName::A,
        ParamName::B,
        ParamName::E,
        ParamName::Leak,
        ParamName::Rest,
        ParamName::Capacitance,
        ParamName::InW,
        ParamName::InA,
        ParamName::InB,
        ParamName::InE,
        ParamName::InMatrix,
        ParamName::InBias,
        ParamName::OutMatrix,
        ParamName::OutBias,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::W => "w",
            ParamName::A => "a",
            ParamName::B => "b",
            ParamName::E => "e",
            ParamName::Leak => "w_l",
            ParamName::Rest => "e_l",
            ParamName::Capacitance => "C",
            ParamName::InW => "in_w",
            ParamName::InA => "in_a",
            ParamName::InB => "in_b",
            ParamName::InE => "in_e",
            ParamName::InMatrix => "A_in",
            ParamName::InBias => "b_in",
            ParamName::OutMatrix => "A_out",
            ParamName::OutBias => "b_out",
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which layer of the three-layer stack a table belongs to. Packing counts
/// cover the recurrent layer and its sensory synapses; the affine biases
/// and the readout are excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Group {
    Recurrent,
    Sensory,
    InputBias,
    Readout,
}

impl Group {
    pub fn counted(self) -> bool {
        matches!(self, Group::Recurrent | Group::Sensory)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Uniform(f64, f64),
    /// `−1` or `+1` with equal probability.
    Sign,
    Const(f64),
}

/// Shape and policy of one table, derived from a [`ModelSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableLayout {
    pub name: ParamName,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
    pub trainable: bool,
    pub nonneg: bool,
    pub group: Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTable {
    pub name: ParamName,
    pub group: Group,
    pub trainable: bool,
    /// Projected onto `≥ 0` after every update.
    pub nonneg: bool,
    pub value: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    tables: Vec<ParamTable>,
}

const W_RANGE: Init = Init::Uniform(0.01, 1.0);
const B_RANGE: Init = Init::Uniform(0.3, 0.8);
const A_RANGE: Init = Init::Uniform(3.0, 8.0);
const LEAK_RANGE: Init = Init::Uniform(0.01, 1.0);
const READOUT_RANGE: Init = Init::Uniform(-0.1, 0.1);

/// Tables owned by a model, in canonical order.
pub fn layout(spec: &ModelSpec) -> Vec<TableLayout> {
    let n = spec.state_dim();
    let m = spec.n_inputs;
    let synaptic = spec.wiring == Wiring::SynapticActivation;
    let slope = spec.w_mode.has_slope_table();
    let ltc = spec.is_ltc();
    let mut out = Vec::new();
    let mut push = |name, rows, cols, init, trainable, nonneg, group| {
        out.push(TableLayout {
            name,
            rows,
            cols,
            init,
            trainable,
            nonneg,
            group,
        })
    };
    let per_pre = |pre: usize, post: usize| if synaptic { (pre, post) } else { (1, pre) };

    use Group::*;
    use ParamName::*;
    push(W, n, n, W_RANGE, true, true, Recurrent);
    if slope {
        let (r, c) = per_pre(n, n);
        push(A, r, c, A_RANGE, true, true, Recurrent);
    }
    let (r, c) = per_pre(n, n);
    push(B, r, c, B_RANGE, true, false, Recurrent);
    if ltc {
        let (r, c) = if synaptic { (n, n) } else { (1, n) };
        push(E, r, c, Init::Sign, true, false, Recurrent);
    }
    if spec.has_decay() {
        push(Leak, 1, n, LEAK_RANGE, true, false, Recurrent);
    }
    if spec.has_rest() {
        push(
            Rest,
            1,
            n,
            Init::Const(0.0),
            spec.learnable_rest,
            false,
            Recurrent,
        );
    }
    if ltc {
        push(Capacitance, 1, n, Init::Const(1.0), false, true, Recurrent);
    }
    match spec.input_mode {
        InputMode::None => {}
        InputMode::Linear => {
            let bound = 1.0 / (m as f64).sqrt();
            push(
                InMatrix,
                m,
                n,
                Init::Uniform(-bound, bound),
                true,
                false,
                Sensory,
            );
            push(InBias, 1, n, Init::Const(0.0), true, false, InputBias);
        }
        InputMode::Synaptic => {
            push(InW, m, n, W_RANGE, true, true, Sensory);
            if slope {
                let (r, c) = per_pre(m, n);
                push(InA, r, c, A_RANGE, true, true, Sensory);
            }
            let (r, c) = per_pre(m, n);
            push(InB, r, c, B_RANGE, true, false, Sensory);
            if ltc && synaptic {
                push(InE, m, n, Init::Sign, true, false, Sensory);
            }
        }
    }
    push(
        OutMatrix,
        spec.n_neurons,
        spec.n_outputs,
        READOUT_RANGE,
        true,
        false,
        Readout,
    );
    push(
        OutBias,
        1,
        spec.n_outputs,
        Init::Const(0.0),
        true,
        false,
        Readout,
    );
    out
}

/// Draws a fresh parameter set; identical seeds give identical sets.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParameterSet, ModelError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tables = layout(spec)
        .into_iter()
        .map(|l| {
            let data = (0..l.rows * l.cols)
                .map(|_| match l.init {
                    Init::Uniform(lo, hi) => rng.gen_range(lo..=hi),
                    Init::Sign => {
                        if rng.gen_bool(0.5) {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    Init::Const(v) => v,
                })
                .collect();
            ParamTable {
                name: l.name,
                group: l.group,
                trainable: l.trainable,
                nonneg: l.nonneg,
                value: Tensor::new(l.rows, l.cols, data).expect("layout shape"),
            }
        })
        .collect();
    Ok(ParameterSet { tables })
}

/// Number of recurrent-layer parameters, fixed ones included, readout and
/// affine input bias excluded.
///
/// Closed form over the spec; `init_params` is checked against it by
/// enumeration in the tests.
pub fn count_params(spec: &ModelSpec) -> Result<usize, ModelError> {
    spec.validate()?;
    let n = spec.state_dim();
    let m = spec.n_inputs;
    let ltc = spec.is_ltc();
    // Tables inside one synapse: w, b, plus a for plain/v modes.
    let per_synapse = if spec.w_mode.has_slope_table() { 3 } else { 2 };
    let recurrent = match spec.wiring {
        Wiring::SynapticActivation => (per_synapse + ltc as usize) * n * n,
        Wiring::NeuralActivation => n * n + (per_synapse - 1) * n + ltc as usize * n,
    };
    let cell_body = spec.has_decay() as usize * n + spec.has_rest() as usize * n + ltc as usize * n;
    let input = match (spec.input_mode, spec.wiring) {
        (InputMode::None, _) => 0,
        (InputMode::Linear, _) => m * n,
        (InputMode::Synaptic, Wiring::SynapticActivation) => (per_synapse + ltc as usize) * m * n,
        (InputMode::Synaptic, Wiring::NeuralActivation) => m * n + (per_synapse - 1) * m,
    };
    Ok(recurrent + cell_body + input)
}

impl ParameterSet {
    pub fn tables(&self) -> &[ParamTable] {
        &self.tables
    }

    pub fn tables_mut(&mut self) -> &mut [ParamTable] {
        &mut self.tables
    }

    pub fn table(&self, name: ParamName) -> Option<&ParamTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn get(&self, name: ParamName) -> Option<&Tensor> {
        self.table(name).map(|t| &t.value)
    }

    pub fn get_mut(&mut self, name: ParamName) -> Option<&mut Tensor> {
        self.tables
            .iter_mut()
            .find(|t| t.name == name)
            .map(|t| &mut t.value)
    }

    /// Replaces a table's contents, keeping its shape.
    pub fn set(&mut self, name: ParamName, value: Tensor) -> Result<(), ModelError> {
        let slot = self.get_mut(name).ok_or(ModelError::MissingTable(name))?;
        if slot.shape() != value.shape() {
            return Err(ModelError::ShapeMismatch {
                table: name,
                expected: slot.shape(),
                found: value.shape(),
            });
        }
        *slot = value;
        Ok(())
    }

    /// Fills every entry of a table with one value.
    pub fn fill(&mut self, name: ParamName, value: f64) -> Result<(), ModelError> {
        let slot = self.get_mut(name).ok_or(ModelError::MissingTable(name))?;
        slot.data_mut().iter_mut().for_each(|v| *v = value);
        Ok(())
    }

    pub fn packing_count(&self) -> usize {
        self.tables
            .iter()
            .filter(|t| t.group.counted())
            .map(|t| t.value.len())
            .sum()
    }

    pub fn total_entries(&self) -> usize {
        self.tables.iter().map(|t| t.value.len()).sum()
    }

    pub fn trainable_entries(&self) -> usize {
        self.tables
            .iter()
            .filter(|t| t.trainable)
            .map(|t| t.value.len())
            .sum()
    }

    /// Projects `C`, `w`, `a` and their sensory counterparts onto `≥ 0`.
    /// Returns how many entries moved.
    pub fn clamp(&mut self) -> usize {
        let mut moved = 0;
        for table in self.tables.iter_mut().filter(|t| t.nonneg) {
            for v in table.value.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                    moved += 1;
                }
            }
        }
        moved
    }

    /// Consuming form of [`ParameterSet::clamp`].
    pub fn clamped(mut self) -> (Self, usize) {
        let moved = self.clamp();
        (self, moved)
    }

    /// Checks table names and shapes against the layout `spec` implies.
    pub fn check_against(&self, spec: &ModelSpec) -> Result<(), ModelError> {
        let expected = layout(spec);
        for l in &expected {
            let table = self.table(l.name).ok_or(ModelError::MissingTable(l.name))?;
            if table.value.shape() != (l.rows, l.cols) {
                return Err(ModelError::ShapeMismatch {
                    table: l.name,
                    expected: (l.rows, l.cols),
                    found: table.value.shape(),
                });
            }
        }
        if let Some(extra) = self
            .tables
            .iter()
            .find(|t| !expected.iter().any(|l| l.name == t.name))
        {
            return Err(ModelError::UnexpectedTable(extra.name));
        }
        Ok(())
    }

    pub fn first_non_finite(&self) -> Option<ParamName> {
        self.tables
            .iter()
            .find(|t| !t.value.is_finite())
            .map(|t| t.name)
    }
}

/// Family-independent view used by reports: everything except the readout.
pub fn describe_family(spec: &ModelSpec) -> String {
    let wiring = match spec.wiring {
        Wiring::NeuralActivation => "NA",
        Wiring::SynapticActivation => "SA",
    };
    let family = match (spec.family, spec.input_mode) {
        (Family::Ltc, InputMode::None) => "ALTC".to_string(),
        (Family::Ltc, _) => "LTC".to_string(),
        (Family::ActRnn, _) => "ACT-RNN".to_string(),
        (Family::CtRnn, _) => "CT-RNN".to_string(),
        (Family::NeuralOde, _) => "NeuralODE".to_string(),
        (Family::Anode, _) => "ANODE".to_string(),
    };
    format!("{wiring}-{family}")
}
