//! Numerical checks of the change of variables `x = W·y` that turns a
//! per-neuron activation network into a per-synapse one.

use super::AnalysisError;
use crate::tensor::{sigmoid, Tensor};

fn mat_vec(w: &Tensor, v: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|i| w.row_slice(i).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn check_inputs(w: &Tensor, b: &[f64], y0: &[f64], dt: f64) -> Result<(), AnalysisError> {
    let n = w.rows();
    if w.cols() != n {
        return Err(AnalysisError::Invalid(format!(
            "W must be square, got {:?}",
            w.shape()
        )));
    }
    if b.len() != n || y0.len() != n {
        return Err(AnalysisError::Invalid(format!(
            "b has length {} and y0 length {}, W is {n}×{n}",
            b.len(),
            y0.len()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(AnalysisError::Invalid(format!(
            "dt must be positive, got {dt}"
        )));
    }
    Ok(())
}

/// Which algebraic condition makes `W·(w∗y) = w∗(W·y)` hold exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeakRegime {
    /// Every neuron has the same leak.
    Uniform,
    /// `W` has no off-diagonal entries.
    DiagonalCoupling,
}

/// Classifies a leak vector and coupling matrix; `None` when neither
/// condition holds.
pub fn leak_regime(leak: &[f64], w: &Tensor) -> Option<LeakRegime> {
    if leak.windows(2).all(|p| p[0] == p[1]) {
        return Some(LeakRegime::Uniform);
    }
    let diagonal = (0..w.rows()).all(|i| (0..w.cols()).all(|j| i == j || w.get(i, j) == 0.0));
    diagonal.then_some(LeakRegime::DiagonalCoupling)
}

/// Integrates `ẏ = −w∗y + σ(W·y + b)` and `ẋ = −w∗x + W·σ(x + b)` from
/// `x₀ = W·y₀` with the same Euler schedule and returns
/// `max_k ‖x_k − W·y_k‖∞`, without checking that the two are equivalent.
pub fn leaky_deviation(
    leak: &[f64],
    w: &Tensor,
    b: &[f64],
    y0: &[f64],
    steps: usize,
    dt: f64,
) -> Result<f64, AnalysisError> {
    check_inputs(w, b, y0, dt)?;
    if leak.len() != w.rows() {
        return Err(AnalysisError::Invalid(format!(
            "leak has length {}, expected {}",
            leak.len(),
            w.rows()
        )));
    }
    let mut y = y0.to_vec();
    let mut x = mat_vec(w, &y);
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let wy = mat_vec(w, &y);
        let dy: Vec<f64> = wy
            .iter()
            .zip(b)
            .zip(y.iter().zip(leak))
            .map(|((z, b), (y, l))| -l * y + sigmoid(z + b))
            .collect();
        let act: Vec<f64> = x.iter().zip(b).map(|(x, b)| sigmoid(x + b)).collect();
        let dx: Vec<f64> = mat_vec(w, &act)
            .iter()
            .zip(x.iter().zip(leak))
            .map(|(s, (x, l))| -l * x + s)
            .collect();
        y.iter_mut().zip(&dy).for_each(|(y, d)| *y += dt * d);
        x.iter_mut().zip(&dx).for_each(|(x, d)| *x += dt * d);
        let mapped = mat_vec(w, &y);
        worst = x
            .iter()
            .zip(&mapped)
            .fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    Ok(worst)
}

/// Leak-free case: `ẏ = σ(W·y + b)` against `ẋ = W·σ(x + b)`.
pub fn check_theorem_1(
    w: &Tensor,
    b: &[f64],
    y0: &[f64],
    steps: usize,
    dt: f64,
) -> Result<f64, AnalysisError> {
    leaky_deviation(&vec![0.0; w.rows()], w, b, y0, steps, dt)
}

/// Leaky case. Only runs where the substitution is exact: a uniform leak
/// or a diagonal `W`.
pub fn check_theorem_2(
    leak: &[f64],
    w: &Tensor,
    b: &[f64],
    y0: &[f64],
    steps: usize,
    dt: f64,
) -> Result<(f64, LeakRegime), AnalysisError> {
    let regime = leak_regime(leak, w).ok_or(AnalysisError::NonCommuting)?;
    Ok((leaky_deviation(leak, w, b, y0, steps, dt)?, regime))
}
