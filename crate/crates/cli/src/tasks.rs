//! Turns a resolved data config into standardized splits.

use std::path::Path;

use anyhow::{bail, Context};
use ltcnet::data::{
    gen_synthetic, load_rollouts, make_windows, mnist_sequences, split, IdxArray, SequenceBatch,
    Splits, Standardizer, SyntheticTask, WindowTask,
};

use crate::config::{DataConfig, Task};

pub const MNIST_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_LABELS: &str = "train-labels-idx1-ubyte";

pub struct Prepared {
    pub splits: Splits,
    pub standardizer: Option<Standardizer>,
}

fn windows(data: &DataConfig, seed: u64) -> anyhow::Result<SequenceBatch> {
    let synthetic =
        |task| gen_synthetic(task, data.rollouts, data.steps, seed).context("generating rollouts");
    let recorded = || {
        let dir = data.data.as_deref().context("--data is required")?;
        load_rollouts(dir).with_context(|| format!("loading rollouts from {}", dir.display()))
    };
    let (rollouts, task) = match data.task {
        Task::SyntheticOscillator => (
            synthetic(SyntheticTask::DampedOscillator)?,
            WindowTask::PredictNext,
        ),
        Task::SyntheticPendulum => (
            synthetic(SyntheticTask::DrivenPendulum)?,
            WindowTask::PredictNext,
        ),
        Task::SyntheticPendulumCloning => (
            synthetic(SyntheticTask::DrivenPendulum)?,
            WindowTask::BehaviouralCloning,
        ),
        Task::Rollouts => (recorded()?, WindowTask::PredictNext),
        Task::RolloutsCloning => (recorded()?, WindowTask::BehaviouralCloning),
        Task::Mnist => {
            let dir = data.data.as_deref().context("--data is required")?;
            return load_mnist(dir);
        }
    };
    Ok(make_windows(&rollouts, data.window, task)?)
}

pub fn load_mnist(dir: &Path) -> anyhow::Result<SequenceBatch> {
    let images = IdxArray::load(&dir.join(MNIST_IMAGES))?;
    let labels = IdxArray::load(&dir.join(MNIST_LABELS))?;
    Ok(mnist_sequences(&images, &labels)?)
}

/// Windows, splits by source and, when enabled, standardizes with
/// train-split statistics. Generation and splitting share `seed`.
pub fn prepare(data: &DataConfig, seed: u64) -> anyhow::Result<Prepared> {
    let batch = windows(data, seed)?;
    if batch.is_empty() {
        bail!("the dataset produced no sequences");
    }
    let splits = split(&batch, data.test_fraction, data.val_fraction, seed)?;
    if !data.standardize {
        return Ok(Prepared {
            splits,
            standardizer: None,
        });
    }
    let standardizer = Standardizer::fit(&splits.train);
    Ok(Prepared {
        splits: standardizer.apply_splits(&splits),
        standardizer: Some(standardizer),
    })
}
