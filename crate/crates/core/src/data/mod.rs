//! Rollouts, sliding windows, splits and the sequence datasets fed to
//! training.

mod idx;
mod rollouts;
mod synthetic;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

pub use idx::{mnist_sequences, read_idx, IdxArray, IMAGE_MAGIC, LABEL_MAGIC};
pub use rollouts::{load_rollouts, save_rollouts, ACTION_PREFIX};
pub use synthetic::{gen_synthetic, oscillator, OscillatorParams, SyntheticTask};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{path}, row {row}: expected {expected} cells, found {found}")]
    Ragged {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}, row {row}, column {col}: cannot parse {cell:?} as a number")]
    NonNumeric {
        path: PathBuf,
        row: usize,
        col: usize,
        cell: String,
    },
    #[error("{path}, row {row}, column {col}: non-finite value")]
    NonFinite {
        path: PathBuf,
        row: usize,
        col: usize,
    },
    #[error("{path}: columns {found:?} differ from {expected:?} in earlier files")]
    DimMismatch {
        path: PathBuf,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error(
        "rollout {index} has {steps} steps, windows of length {window} need more than {window}"
    )]
    TooShort {
        index: usize,
        steps: usize,
        window: usize,
    },
    #[error("behavioural cloning needs action columns, rollout {0} has none")]
    MissingActions(usize),
    #[error("{available} sequences cannot populate train, validation and test splits")]
    TooFewRollouts { available: usize },
    #[error("invalid split fractions test={test}, val={val}")]
    Fractions { test: f64, val: f64 },
    #[error("idx: {0}")]
    Idx(String),
    #[error("{0}")]
    Invalid(String),
}

/// One simulated or recorded episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub feature_names: Vec<String>,
    /// `T × d` observations.
    pub features: Tensor,
    pub action_names: Vec<String>,
    /// `T × k` actions, when recorded.
    pub actions: Option<Tensor>,
}

impl Rollout {
    pub fn steps(&self) -> usize {
        self.features.rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowTask {
    /// Inputs `obs[t..t+L)`, target `obs[t+L]`.
    PredictNext,
    /// Inputs `obs[t..t+L)`, target `action[t+L]`.
    BehaviouralCloning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub source: usize,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// One row per window.
    Values(Tensor),
    Classes {
        labels: Vec<usize>,
        n_classes: usize,
    },
}

/// Windows over a set of source sequences, with one target per window.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    /// Each source is `T_s × d`.
    pub sources: Vec<Tensor>,
    pub windows: Vec<Window>,
    pub seq_len: usize,
    pub targets: Targets,
    /// Whether value targets live in the same space as the features.
    pub targets_are_features: bool,
}

/// A mini-batch laid out for the solver: one `B × d` tensor per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<Tensor>,
    pub targets: BatchTargets,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BatchTargets {
    Values(Tensor),
    Classes(Vec<usize>),
}

impl SequenceBatch {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.sources.first().map_or(0, Tensor::cols)
    }

    /// Output width a model needs for these targets.
    pub fn target_dim(&self) -> usize {
        match &self.targets {
            Targets::Values(t) => t.cols(),
            Targets::Classes { n_classes, .. } => *n_classes,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self.targets, Targets::Classes { .. })
    }

    /// Gathers the windows at `idx` into time-major tensors.
    pub fn batch(&self, idx: &[usize]) -> Batch {
        let d = self.n_features();
        let inputs = (0..self.seq_len)
            .map(|t| {
                let mut data = Vec::with_capacity(idx.len() * d);
                for &k in idx {
                    let w = self.windows[k];
                    data.extend_from_slice(self.sources[w.source].row_slice(w.start + t));
                }
                Tensor::new(idx.len(), d, data).expect("window rows have the source width")
            })
            .collect();
        let targets = match &self.targets {
            Targets::Values(v) => {
                let rows = idx
                    .iter()
                    .flat_map(|&k| v.row_slice(k).iter().copied())
                    .collect();
                BatchTargets::Values(Tensor::new(idx.len(), v.cols(), rows).expect("target rows"))
            }
            Targets::Classes { labels, .. } => {
                BatchTargets::Classes(idx.iter().map(|&k| labels[k]).collect())
            }
        };
        Batch { inputs, targets }
    }

    /// Keeps the windows whose source is listed, renumbering sources in
    /// the given order.
    pub fn select_sources(&self, sources: &[usize]) -> SequenceBatch {
        let mut remap = vec![usize::MAX; self.sources.len()];
        for (new, &old) in sources.iter().enumerate() {
            remap[old] = new;
        }
        let keep: Vec<usize> = (0..self.windows.len())
            .filter(|&k| remap[self.windows[k].source] != usize::MAX)
            .collect();
        let windows = keep
            .iter()
            .map(|&k| Window {
                source: remap[self.windows[k].source],
                start: self.windows[k].start,
            })
            .collect();
        let targets = match &self.targets {
            Targets::Values(v) => {
                let data = keep
                    .iter()
                    .flat_map(|&k| v.row_slice(k).iter().copied())
                    .collect();
                Targets::Values(Tensor::new(keep.len(), v.cols(), data).expect("target rows"))
            }
            Targets::Classes { labels, n_classes } => Targets::Classes {
                labels: keep.iter().map(|&k| labels[k]).collect(),
                n_classes: *n_classes,
            },
        };
        SequenceBatch {
            sources: sources.iter().map(|&s| self.sources[s].clone()).collect(),
            windows,
            seq_len: self.seq_len,
            targets,
            targets_are_features: self.targets_are_features,
        }
    }
}

/// Sliding windows of length `len`, stride 1, never crossing a rollout
/// boundary.
pub fn make_windows(
    rollouts: &[Rollout],
    len: usize,
    task: WindowTask,
) -> Result<SequenceBatch, DataError> {
    if len == 0 {
        return Err(DataError::Invalid("window length must be ≥ 1".into()));
    }
    let mut windows = Vec::new();
    let mut targets = Vec::new();
    let mut target_dim = None;
    for (s, r) in rollouts.iter().enumerate() {
        if r.steps() <= len {
            return Err(DataError::TooShort {
                index: s,
                steps: r.steps(),
                window: len,
            });
        }
        let source = match task {
            WindowTask::PredictNext => &r.features,
            WindowTask::BehaviouralCloning => {
                r.actions.as_ref().ok_or(DataError::MissingActions(s))?
            }
        };
        target_dim = Some(source.cols());
        for start in 0..r.steps() - len {
            windows.push(Window { source: s, start });
            targets.extend_from_slice(source.row_slice(start + len));
        }
    }
    let dim = target_dim.unwrap_or(0);
    Ok(SequenceBatch {
        sources: rollouts.iter().map(|r| r.features.clone()).collect(),
        targets: Targets::Values(
            Tensor::new(windows.len(), dim, targets).expect("one target row per window"),
        ),
        windows,
        seq_len: len,
        targets_are_features: task == WindowTask::PredictNext,
    })
}

/// Which sources landed in which split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: SequenceBatch,
    pub val: SequenceBatch,
    pub test: SequenceBatch,
    pub manifest: SplitManifest,
}

/// Seeded assignment of `n` sources to train/val/test. Each split receives
/// `round(n·fraction)` sources, at least one.
pub fn split_sources(n: usize, test: f64, val: f64, seed: u64) -> Result<SplitManifest, DataError> {
    let ok = |f: f64| f > 0.0 && f < 1.0;
    if !(ok(test) && ok(val) && test + val < 1.0) {
        return Err(DataError::Fractions { test, val });
    }
    let n_test = ((n as f64 * test).round() as usize).max(1);
    let n_val = ((n as f64 * val).round() as usize).max(1);
    if n < n_test + n_val + 1 {
        return Err(DataError::TooFewRollouts { available: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Ok(SplitManifest {
        seed,
        test_fraction: test,
        val_fraction: val,
        test: sorted(&order[..n_test]),
        val: sorted(&order[n_test..n_test + n_val]),
        train: sorted(&order[n_test + n_val..]),
    })
}

/// Splits at source granularity so overlapping windows never straddle
/// train and test.
pub fn split(batch: &SequenceBatch, test: f64, val: f64, seed: u64) -> Result<Splits, DataError> {
    let manifest = split_sources(batch.sources.len(), test, val, seed)?;
    Ok(Splits {
        train: batch.select_sources(&manifest.train),
        val: batch.select_sources(&manifest.val),
        test: batch.select_sources(&manifest.test),
        manifest,
    })
}

/// Per-feature affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Statistics over every row of every source in `batch`. Constant
    /// features keep a unit scale.
    pub fn fit(batch: &SequenceBatch) -> Standardizer {
        let d = batch.n_features();
        let rows: usize = batch.sources.iter().map(Tensor::rows).sum();
        let mut mean = vec![0.0; d];
        for s in &batch.sources {
            for r in 0..s.rows() {
                mean.iter_mut()
                    .zip(s.row_slice(r))
                    .for_each(|(m, v)| *m += v);
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows.max(1) as f64);
        let mut var = vec![0.0; d];
        for s in &batch.sources {
            for r in 0..s.rows() {
                for ((acc, v), m) in var.iter_mut().zip(s.row_slice(r)).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / rows.max(1) as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    fn apply_rows(&self, t: &Tensor) -> Tensor {
        let d = t.cols();
        let mut out = t.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let c = k % d;
            *v = (*v - self.mean[c]) / self.std[c];
        }
        out
    }

    /// Standardizes the features, and the targets when they are features.
    pub fn apply(&self, batch: &SequenceBatch) -> SequenceBatch {
        let mut out = batch.clone();
        out.sources = batch.sources.iter().map(|s| self.apply_rows(s)).collect();
        if let (Targets::Values(v), true) = (&batch.targets, batch.targets_are_features) {
            out.targets = Targets::Values(self.apply_rows(v));
        }
        out
    }

    pub fn apply_splits(&self, splits: &Splits) -> Splits {
        Splits {
            train: self.apply(&splits.train),
            val: self.apply(&splits.val),
            test: self.apply(&splits.test),
            manifest: splits.manifest.clone(),
        }
    }
}
