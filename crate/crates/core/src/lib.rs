//! Continuous-time recurrent networks trained through an unrolled Euler
//! solver.
//!
//! The crate covers NeuralODE/ANODE, autonomous and input-driven CT-RNNs, and
//! liquid time-constant networks (LTCs), each with neural or synaptic
//! activation, sigmoid or tanh nonlinearity, and linear or synaptic input
//! mapping. Gradients come from a small reverse-mode tape over dense
//! matrices.

pub mod analysis;
pub mod data;
pub mod descriptor;
pub mod model;
pub mod solver;
pub mod tape;
pub mod tensor;
pub mod train;

pub use descriptor::{Descriptor, DescriptorError};
pub use model::{ModelError, ModelSpec, ParamName, ParameterSet};
pub use solver::SolverConfig;
pub use tape::{NodeId, Tape};
pub use tensor::{ShapeError, Tensor};
