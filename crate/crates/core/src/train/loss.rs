use crate::tape::{NodeId, Tape};
use crate::tensor::{ShapeError, Tensor};

/// Mean of squared differences over every element.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64, ShapeError> {
    if pred.shape() != target.shape() {
        return Err(ShapeError::Mismatch {
            op: "mse",
            lhs: pred.shape(),
            rhs: target.shape(),
        });
    }
    if pred.is_empty() {
        return Err(ShapeError::Invalid {
            op: "mse",
            detail: "empty prediction".into(),
        });
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// `−log softmax(logits)[label]`, shifted by the maximum logit.
pub fn cross_entropy_loss(logits: &[f64], label: usize) -> Result<f64, ShapeError> {
    if label >= logits.len() {
        return Err(ShapeError::Invalid {
            op: "cross_entropy",
            detail: format!("label {label} out of range for {} classes", logits.len()),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

/// Mean cross-entropy over the rows of a `B × classes` logit matrix.
pub fn cross_entropy_batch(logits: &Tensor, labels: &[usize]) -> Result<f64, ShapeError> {
    if logits.rows() != labels.len() {
        return Err(ShapeError::Invalid {
            op: "cross_entropy",
            detail: format!("{} rows for {} labels", logits.rows(), labels.len()),
        });
    }
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        total += cross_entropy_loss(logits.row_slice(r), label)?;
    }
    Ok(total / labels.len().max(1) as f64)
}

pub fn mse_node(tape: &mut Tape, pred: NodeId, target: &Tensor) -> Result<NodeId, ShapeError> {
    let target = tape.leaf(target.clone());
    let diff = tape.sub(pred, target)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean_all(sq))
}

/// Index of the largest logit in each row.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row_slice(r);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}
