//! Run configuration: flags, an optional JSON file, and defaults, merged
//! in that order of precedence.

use std::path::{Path, PathBuf};

use clap::Args;
use ltcnet::model::{Activation, Family, Gate, InputMode, ModelSpec, WMode, Wiring};
use ltcnet::train::{AdamConfig, TrainConfig};
use ltcnet::{Descriptor, SolverConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Relative data paths are resolved against this directory when set.
pub const DATA_ROOT_ENV: &str = "LTCNET_DATA_ROOT";

/// Parses a kebab-case name through the type's serde representation.
pub fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_wiring(s: &str) -> Result<Wiring, String> {
    match s {
        "na" | "NA" => Ok(Wiring::NeuralActivation),
        "sa" | "SA" => Ok(Wiring::SynapticActivation),
        other => kebab(other).map_err(|_| format!("unknown wiring {other:?} (na, sa)")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Next-observation prediction on generated damped oscillators.
    SyntheticOscillator,
    /// Next-observation prediction on a generated driven pendulum.
    SyntheticPendulum,
    /// Next-torque prediction on a generated driven pendulum.
    SyntheticPendulumCloning,
    /// Next-observation prediction on a directory of CSV rollouts.
    Rollouts,
    /// Next-action prediction on a directory of CSV rollouts.
    RolloutsCloning,
    /// Row-by-row digit classification from IDX files.
    Mnist,
}

/// Model selection: a descriptor string or explicit fields.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelArgs {
    /// Compact model string, e.g. ctrnn_vsigm+s_synaptic
    #[arg(long)]
    pub descriptor: Option<String>,
    /// neural-ode, anode, act-rnn, ct-rnn or ltc
    #[arg(long, value_parser = kebab::<Family>)]
    pub family: Option<Family>,
    /// na or sa (default sa)
    #[arg(long, value_parser = parse_wiring)]
    pub wiring: Option<Wiring>,
    /// none, linear or synaptic
    #[arg(long = "input", value_parser = kebab::<InputMode>)]
    pub input_mode: Option<InputMode>,
    /// plain, r or v (default v)
    #[arg(long, value_parser = kebab::<WMode>)]
    pub w_mode: Option<WMode>,
    /// sigmoid or tanh (default sigmoid)
    #[arg(long, value_parser = kebab::<Activation>)]
    pub activation: Option<Activation>,
    /// none, one-minus or reversal (default reversal for ltc, none otherwise)
    #[arg(long, value_parser = kebab::<Gate>)]
    pub gate: Option<Gate>,
    /// Learnable resting potential
    #[arg(long)]
    pub lis: Option<bool>,
    #[arg(long)]
    pub neurons: Option<usize>,
    /// Input dimension (taken from the data when training)
    #[arg(long)]
    pub inputs: Option<usize>,
    #[arg(long)]
    pub outputs: Option<usize>,
    /// Extra state dimensions for anode
    #[arg(long)]
    pub augment: Option<usize>,
    /// Euler sub-step
    #[arg(long)]
    pub dt: Option<f64>,
    /// Euler sub-steps per input step
    #[arg(long)]
    pub unfolds: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataArgs {
    #[arg(long, value_parser = kebab::<Task>)]
    pub task: Option<Task>,
    /// Rollout directory, or directory holding the IDX files for mnist
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of generated rollouts
    #[arg(long)]
    pub rollouts: Option<usize>,
    /// Steps per generated rollout
    #[arg(long)]
    pub steps: Option<usize>,
    /// Window length for rollout tasks
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Standardize features with train-split statistics
    #[arg(long)]
    pub standardize: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for the checkpoint, report and loss curve
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything a run can be configured with; also the schema of
/// `--config` files.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

macro_rules! prefer {
    ($flags:expr, $file:expr; $($field:ident),* $(,)?) => {
        $( $flags.$field = $flags.$field.take().or($file.$field.take()); )*
    };
}

impl RunArgs {
    /// Fills unset flags from `file`.
    pub fn or_file(mut self, mut file: RunArgs) -> RunArgs {
        prefer!(self.model, file.model; descriptor, family, wiring, input_mode, w_mode, activation, gate, lis,
            neurons, inputs, outputs, augment, dt, unfolds);
        prefer!(self.data, file.data; task, data, rollouts, steps, window, test_fraction, val_fraction, standardize);
        prefer!(self.train, file.train; epochs, batch_size, lr, seed, out);
        self
    }

    pub fn with_config(self, path: Option<&Path>) -> Result<RunArgs, CliError> {
        let Some(path) = path else { return Ok(self) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let file: RunArgs = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        Ok(self.or_file(file))
    }
}

impl ModelArgs {
    fn explicit_fields(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut note = |set: bool, name| {
            if set {
                out.push(name)
            }
        };
        note(self.family.is_some(), "family");
        note(self.wiring.is_some(), "wiring");
        note(self.input_mode.is_some(), "input");
        note(self.w_mode.is_some(), "w-mode");
        note(self.activation.is_some(), "activation");
        note(self.gate.is_some(), "gate");
        note(self.lis.is_some(), "lis");
        note(self.augment.is_some(), "augment");
        out
    }

    pub fn solver(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            dt: self.dt.unwrap_or(d.dt),
            unfolds: self.unfolds.unwrap_or(d.unfolds),
        }
    }

    /// The parsed descriptor, if one was given.
    pub fn descriptor(&self) -> Result<Option<Descriptor>, CliError> {
        match &self.descriptor {
            None => Ok(None),
            Some(s) => Descriptor::parse(s)
                .map(Some)
                .map_err(|e| CliError::Usage(format!("{e}\n{}", e.pointer()))),
        }
    }

    /// Input mode before sizes are known.
    pub fn input_mode(&self) -> Result<InputMode, CliError> {
        if let Some(d) = self.descriptor()? {
            return Ok(d.input_mode);
        }
        Ok(self.input_mode.unwrap_or(match self.family {
            Some(Family::NeuralOde | Family::Anode | Family::ActRnn) => InputMode::None,
            _ => InputMode::Synaptic,
        }))
    }

    /// Builds and validates the spec. `inputs` and `outputs` fill sizes the
    /// flags leave open.
    pub fn spec(
        &self,
        inputs: Option<usize>,
        outputs: Option<usize>,
    ) -> Result<ModelSpec, CliError> {
        let neurons = self
            .neurons
            .ok_or_else(|| CliError::Usage("--neurons is required".into()))?;
        let input_mode = self.input_mode()?;
        let n_inputs = match input_mode {
            InputMode::None => 0,
            _ => self.inputs.or(inputs).ok_or_else(|| {
                CliError::Usage("--inputs is required for a model with inputs".into())
            })?,
        };
        let n_outputs = self.outputs.or(outputs).unwrap_or(1);
        let invalid = |e: ltcnet::ModelError| CliError::Usage(e.to_string());
        let spec = match self.descriptor()? {
            Some(d) => {
                let explicit = self.explicit_fields();
                if !explicit.is_empty() {
                    return Err(CliError::Usage(format!(
                        "--descriptor cannot be combined with --{}",
                        explicit.join(", --")
                    )));
                }
                d.to_model_spec(neurons, n_inputs, self.solver())
                    .map_err(invalid)?
            }
            None => {
                let family = self
                    .family
                    .ok_or_else(|| CliError::Usage("give --descriptor or --family".into()))?;
                ModelSpec {
                    family,
                    activation: self.activation.unwrap_or(Activation::Sigmoid),
                    wiring: self.wiring.unwrap_or(Wiring::SynapticActivation),
                    input_mode,
                    w_mode: self.w_mode.unwrap_or(WMode::V),
                    gate: self.gate.unwrap_or(if family == Family::Ltc {
                        Gate::Reversal
                    } else {
                        Gate::None
                    }),
                    learnable_rest: self.lis.unwrap_or(false),
                    n_neurons: neurons,
                    n_inputs,
                    n_outputs,
                    n_augment: self
                        .augment
                        .unwrap_or(if family == Family::Anode { 1 } else { 0 }),
                    solver: self.solver(),
                }
            }
        }
        .with_outputs(n_outputs);
        spec.validate().map_err(invalid)?;
        Ok(spec)
    }
}

/// Concrete data settings after defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub task: Task,
    pub data: Option<PathBuf>,
    pub rollouts: usize,
    pub steps: usize,
    pub window: usize,
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub standardize: bool,
}

impl DataArgs {
    pub fn resolve(&self) -> Result<DataConfig, CliError> {
        let task = self
            .task
            .ok_or_else(|| CliError::Usage("--task is required".into()))?;
        let needs_path = matches!(task, Task::Rollouts | Task::RolloutsCloning | Task::Mnist);
        let data = match (&self.data, needs_path) {
            (Some(p), _) => Some(resolve_data_path(p)),
            (None, true) => {
                return Err(CliError::Usage(format!(
                    "--data is required for task {}",
                    task_name(task)
                )))
            }
            (None, false) => None,
        };
        Ok(DataConfig {
            task,
            data,
            rollouts: self.rollouts.unwrap_or(40),
            steps: self.steps.unwrap_or(100),
            window: self.window.unwrap_or(20),
            test_fraction: self.test_fraction.unwrap_or(0.15),
            val_fraction: self.val_fraction.unwrap_or(0.10),
            standardize: self.standardize.unwrap_or(task != Task::Mnist),
        })
    }
}

pub fn task_name(task: Task) -> String {
    serde_json::to_value(task)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn resolve_data_path(p: &Path) -> PathBuf {
    match std::env::var_os(DATA_ROOT_ENV) {
        Some(root) if p.is_relative() => Path::new(&root).join(p),
        _ => p.to_path_buf(),
    }
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<TrainConfig, CliError> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            seed: self.seed.unwrap_or(d.seed),
            adam: AdamConfig {
                lr: self.lr.unwrap_or(d.adam.lr),
                ..d.adam
            },
        };
        if cfg.batch_size == 0 {
            return Err(CliError::Usage("--batch-size must be ≥ 1".into()));
        }
        if !(cfg.adam.lr > 0.0 && cfg.adam.lr.is_finite()) {
            return Err(CliError::Usage(format!(
                "--lr must be positive, got {}",
                cfg.adam.lr
            )));
        }
        Ok(cfg)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("ltcnet-run"))
    }
}

/// The fully resolved run, embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRun {
    pub descriptor: Option<String>,
    pub spec: ModelSpec,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub out: PathBuf,
}
