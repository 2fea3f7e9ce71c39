//! Losses, Adam with constraint projection, and the epoch loop.

mod loss;
mod optim;

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Batch, BatchTargets, SequenceBatch, Splits, Standardizer};
use crate::model::{init_params, BoundParams, ModelError, ModelSpec, ParamName, ParameterSet};
use crate::solver::{initial_state_node, unroll, Emit};
use crate::tape::{NodeId, Tape};
use crate::tensor::{ShapeError, Tensor};

pub use loss::{argmax_rows, cross_entropy_batch, cross_entropy_loss, mse_loss, mse_node};
pub use optim::{adam_step, AdamConfig, OptimizerState};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("non-finite gradient in parameter table {0}")]
    NonFiniteGradient(ParamName),
    #[error("training diverged in epoch {epoch}, batch {batch}: {cause}")]
    Diverged {
        epoch: usize,
        batch: usize,
        cause: String,
        /// Everything recorded up to the failing step.
        report: Box<TrainReport>,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// MSE for regression, mean cross-entropy for classification.
    pub loss: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: Option<f64>,
    /// Parameter entries the projection moved during this epoch.
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub spec: ModelSpec,
    pub descriptor: Option<String>,
    pub config: TrainConfig,
    pub parameter_count: usize,
    /// Validation metrics of the initial parameters.
    pub initial: Metrics,
    pub epochs: Vec<EpochRecord>,
    /// 0 when no epoch improved on the initial parameters.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Test metrics of the retained parameters.
    pub test: Option<Metrics>,
    pub elapsed_secs: f64,
}

impl TrainReport {
    pub fn save_json(&self, path: &Path) -> Result<(), TrainError> {
        write_json(path, self)
    }

    /// `epoch,train_loss,val_loss` rows for plotting.
    pub fn save_loss_csv(&self, path: &Path) -> Result<(), TrainError> {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss));
        }
        fs::write(path, out).map_err(|e| io_error(path, e))
    }
}

/// Everything needed to evaluate a trained model later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub descriptor: Option<String>,
    pub params: ParameterSet,
    pub standardizer: Option<Standardizer>,
    pub epoch: usize,
    pub val_loss: f64,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Checkpoint, TrainError> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| io_error(path, e))?;
        ckpt.spec.validate()?;
        ckpt.params.check_against(&ckpt.spec)?;
        Ok(ckpt)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub checkpoint: Checkpoint,
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> TrainError {
    TrainError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), TrainError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_error(path, e))?;
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Records a forward pass over `inputs` and returns the final output node
/// and the bound parameters.
fn forward(
    tape: &mut Tape,
    spec: &ModelSpec,
    params: &ParameterSet,
    inputs: &[Tensor],
) -> Result<(NodeId, BoundParams), TrainError> {
    let batch = inputs
        .first()
        .map(Tensor::rows)
        .ok_or(ModelError::EmptySequence)?;
    let bound = BoundParams::bind(tape, spec, params)?;
    let x0 = initial_state_node(tape, spec, &bound, batch)?;
    let ids: Vec<NodeId> = inputs.iter().map(|u| tape.leaf(u.clone())).collect();
    let out = unroll(tape, spec, &bound, x0, &ids, Emit::Final)?;
    Ok((out.outputs[0], bound))
}

fn loss_node(tape: &mut Tape, out: NodeId, targets: &BatchTargets) -> Result<NodeId, TrainError> {
    Ok(match targets {
        BatchTargets::Values(t) => mse_node(tape, out, t)?,
        BatchTargets::Classes(labels) => tape.softmax_cross_entropy(out, labels)?,
    })
}

/// Final-step outputs (`B × n_outputs`) for a time-major input sequence.
pub fn predict(
    spec: &ModelSpec,
    params: &ParameterSet,
    inputs: &[Tensor],
) -> Result<Tensor, TrainError> {
    let mut tape = Tape::new();
    let (out, _) = forward(&mut tape, spec, params, inputs)?;
    Ok(tape.value(out).clone())
}

/// Mini-batch loss and its gradient for every table, in table order.
pub fn loss_and_grad(
    spec: &ModelSpec,
    params: &ParameterSet,
    batch: &Batch,
) -> Result<(f64, Vec<Tensor>), TrainError> {
    let mut tape = Tape::new();
    let (out, bound) = forward(&mut tape, spec, params, &batch.inputs)?;
    let loss = loss_node(&mut tape, out, &batch.targets)?;
    let ids: Vec<NodeId> = bound.leaves().iter().map(|&(_, id)| id).collect();
    let grads = tape
        .gradient(loss, &ids)
        .map_err(|e| TrainError::Invalid(e.to_string()))?;
    Ok((tape.value(loss).item().expect("scalar loss"), grads))
}

const EVAL_CHUNK: usize = 256;

/// Loss (and accuracy for classification) over a whole set.
pub fn evaluate(
    spec: &ModelSpec,
    params: &ParameterSet,
    set: &SequenceBatch,
) -> Result<Metrics, TrainError> {
    if set.is_empty() {
        return Err(TrainError::Invalid("cannot evaluate an empty set".into()));
    }
    let (mut loss, mut correct) = (0.0, 0usize);
    let all: Vec<usize> = (0..set.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let batch = set.batch(chunk);
        let out = predict(spec, params, &batch.inputs)?;
        match &batch.targets {
            BatchTargets::Values(t) => loss += mse_loss(&out, t)? * chunk.len() as f64,
            BatchTargets::Classes(labels) => {
                loss += cross_entropy_batch(&out, labels)? * chunk.len() as f64;
                correct += argmax_rows(&out)
                    .iter()
                    .zip(labels)
                    .filter(|(p, l)| p == l)
                    .count();
            }
        }
    }
    let n = set.len() as f64;
    Ok(Metrics {
        loss: loss / n,
        accuracy: set.is_classification().then(|| correct as f64 / n),
    })
}

fn check_compatible(spec: &ModelSpec, set: &SequenceBatch, name: &str) -> Result<(), TrainError> {
    if set.is_empty() {
        return Err(TrainError::Invalid(format!("{name} split is empty")));
    }
    if set.n_features() != spec.n_inputs {
        return Err(TrainError::Invalid(format!(
            "{name} split has {} features, the model takes {} inputs",
            set.n_features(),
            spec.n_inputs
        )));
    }
    if set.target_dim() != spec.n_outputs {
        return Err(TrainError::Invalid(format!(
            "{name} split needs {} outputs, the model has {}",
            set.target_dim(),
            spec.n_outputs
        )));
    }
    Ok(())
}

/// Trains from `init_params(spec, cfg.seed)`, keeping the parameters with
/// the lowest validation loss.
pub fn train(
    spec: &ModelSpec,
    splits: &Splits,
    cfg: &TrainConfig,
    descriptor: Option<String>,
    standardizer: Option<Standardizer>,
) -> Result<TrainOutcome, TrainError> {
    spec.validate()?;
    check_compatible(spec, &splits.train, "train")?;
    check_compatible(spec, &splits.val, "validation")?;
    if cfg.batch_size == 0 {
        return Err(TrainError::Invalid("batch size must be ≥ 1".into()));
    }
    let started = Instant::now();
    let mut params = init_params(spec, cfg.seed)?;
    let mut opt = OptimizerState::new(&params, cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);

    let initial = evaluate(spec, &params, &splits.val)?;
    let mut report = TrainReport {
        seed: cfg.seed,
        spec: spec.clone(),
        descriptor: descriptor.clone(),
        config: *cfg,
        parameter_count: params.packing_count(),
        initial,
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        best_val_loss: initial.loss,
        test: None,
        elapsed_secs: 0.0,
    };
    let mut best = params.clone();
    let mut order: Vec<usize> = (0..splits.train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut clamped) = (0.0, 0);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = splits.train.batch(idx);
            let diverged = |cause: String, report: &TrainReport| TrainError::Diverged {
                epoch,
                batch: b,
                cause,
                report: Box::new(TrainReport {
                    elapsed_secs: started.elapsed().as_secs_f64(),
                    ..report.clone()
                }),
            };
            let (loss, grads) = loss_and_grad(spec, &params, &batch)?;
            if !loss.is_finite() {
                return Err(diverged(format!("loss is {loss}"), &report));
            }
            clamped += match opt.step(&mut params, &grads) {
                Ok(n) => n,
                Err(e @ TrainError::NonFiniteGradient(_)) => {
                    return Err(diverged(e.to_string(), &report))
                }
                Err(e) => return Err(e),
            };
            total += loss * idx.len() as f64;
        }
        let val = evaluate(spec, &params, &splits.val)?;
        if !val.loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                batch: 0,
                cause: format!("validation loss is {}", val.loss),
                report: Box::new(report),
            });
        }
        report.epochs.push(EpochRecord {
            epoch,
            train_loss: total / splits.train.len() as f64,
            val_loss: val.loss,
            val_accuracy: val.accuracy,
            clamped,
        });
        if val.loss < report.best_val_loss {
            report.best_val_loss = val.loss;
            report.best_epoch = epoch;
            best = params.clone();
        }
    }

    if !splits.test.is_empty() {
        check_compatible(spec, &splits.test, "test")?;
        report.test = Some(evaluate(spec, &best, &splits.test)?);
    }
    report.elapsed_secs = started.elapsed().as_secs_f64();
    let checkpoint = Checkpoint {
        spec: spec.clone(),
        descriptor,
        params: best,
        standardizer,
        epoch: report.best_epoch,
        val_loss: report.best_val_loss,
    };
    Ok(TrainOutcome { report, checkpoint })
}
