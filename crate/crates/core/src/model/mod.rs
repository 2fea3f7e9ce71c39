//! Model families, their parameter tables and right-hand sides.

mod dynamics;
mod params;
mod spec;
mod synapse;

pub use dynamics::{
    anode_project, anode_wrap, derivative, derivative_batch, derivative_node, input_map,
    input_term, output_map, output_node, BoundParams,
};
pub use params::{
    count_params, describe_family, init_params, layout, Group, Init, ParamName, ParamTable,
    ParameterSet, TableLayout,
};
pub use spec::{Activation, Family, Gate, InputMode, ModelSpec, WMode, Wiring};

use crate::tensor::ShapeError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("parameter table {0} is missing")]
    MissingTable(ParamName),
    #[error("parameter table {0} does not belong to this model")]
    UnexpectedTable(ParamName),
    #[error("parameter table {table} has shape {found:?}, the spec requires {expected:?}")]
    ShapeMismatch {
        table: ParamName,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{0}")]
    InputShape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("input sequence is empty")]
    EmptySequence,
    #[error("selector index {index} out of range for a state of length {len}")]
    Selector { index: usize, len: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}
