//! Numerical checks of structural properties: the activation-placement
//! equivalences, LTC linearization, leak stability, parameter packing and
//! end-to-end gradients.

mod gradcheck;
mod linearize;
mod packing;
pub mod suites;
mod theorems;

pub use gradcheck::{gradcheck, GradCheck};
pub use linearize::{linearize_at, LinearizationView};
pub use packing::{packing_report, Comparison, PackingReport, PackingRow, QuotedMatch};
pub use theorems::{check_theorem_1, check_theorem_2, leak_regime, leaky_deviation, LeakRegime};

use crate::model::{InputMode, ModelError, ModelSpec, ParamName, ParameterSet};
use crate::solver::euler_step;
use crate::train::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("linearization is defined for LTC networks only")]
    NotLtc,
    #[error("the leak does not commute with W: it must be uniform or W diagonal")]
    NonCommuting,
    #[error("{0}")]
    Invalid(String),
}

/// `‖x_k − e_l‖∞` along `steps` Euler sub-steps of an autonomous network,
/// starting from `x0` (index 0 is the initial distance).
pub fn rest_distances(
    spec: &ModelSpec,
    params: &ParameterSet,
    x0: &[f64],
    steps: usize,
) -> Result<Vec<f64>, AnalysisError> {
    if spec.input_mode != InputMode::None || !spec.has_decay() {
        return Err(AnalysisError::Invalid(
            "needs an autonomous network with a leak".into(),
        ));
    }
    let rest = match params.get(ParamName::Rest) {
        Some(r) => r.data().to_vec(),
        None => vec![0.0; spec.state_dim()],
    };
    let distance = |x: &[f64]| {
        x.iter()
            .zip(&rest)
            .fold(0.0f64, |m, (x, e)| m.max((x - e).abs()))
    };
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(distance(&x));
    for _ in 0..steps {
        x = euler_step(spec, params, &x, None, spec.solver.dt)?;
        out.push(distance(&x));
    }
    Ok(out)
}
