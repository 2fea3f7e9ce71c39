//! Tape gradients of a full unrolled rollout against central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::data::{Batch, BatchTargets};
use crate::model::{init_params, InputMode, ModelSpec};
use crate::tensor::Tensor;
use crate::train::loss_and_grad;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    /// `‖g − g_fd‖₂ / ‖g_fd‖₂` over every parameter entry.
    pub relative_error: f64,
    pub max_abs_error: f64,
    pub entries: usize,
}

/// Compares gradients of an MSE loss on random data over `steps` input
/// steps. Uses a batch of 2 and step `h` for the differences.
pub fn gradcheck(
    spec: &ModelSpec,
    seed: u64,
    steps: usize,
    h: f64,
) -> Result<GradCheck, AnalysisError> {
    spec.validate()?;
    if steps == 0 {
        return Err(AnalysisError::Invalid(
            "gradient check needs at least one step".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch_size = 2;
    let m = if spec.input_mode == InputMode::None {
        0
    } else {
        spec.n_inputs
    };
    let mut random = |rows: usize, cols: usize| {
        Tensor::new(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .expect("sized")
    };
    let batch = Batch {
        inputs: (0..steps).map(|_| random(batch_size, m)).collect(),
        targets: BatchTargets::Values(random(batch_size, spec.n_outputs)),
    };
    let params = init_params(spec, seed)?;
    let (_, grads) = loss_and_grad(spec, &params, &batch)?;

    let (mut diff2, mut norm2, mut max_abs, mut entries) = (0.0, 0.0, 0.0f64, 0);
    for (k, table) in params.tables().iter().enumerate() {
        for e in 0..table.value.len() {
            let shifted = |delta: f64| -> Result<f64, AnalysisError> {
                let mut p = params.clone();
                p.tables_mut()[k].value.data_mut()[e] += delta;
                Ok(loss_and_grad(spec, &p, &batch)?.0)
            };
            let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
            let d = grads[k].data()[e] - fd;
            diff2 += d * d;
            norm2 += fd * fd;
            max_abs = max_abs.max(d.abs());
            entries += 1;
        }
    }
    Ok(GradCheck {
        relative_error: if norm2 > 0.0 {
            (diff2 / norm2).sqrt()
        } else {
            diff2.sqrt()
        },
        max_abs_error: max_abs,
        entries,
    })
}
