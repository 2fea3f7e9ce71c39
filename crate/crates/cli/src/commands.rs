use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ltcnet::analysis::suites::{run_suite, Suite, SuiteReport};
use ltcnet::analysis::Comparison;
use ltcnet::data::{gen_synthetic, save_rollouts, SequenceBatch, SyntheticTask};
use ltcnet::model::{count_params as packed_count, describe_family, InputMode, ModelSpec, Wiring};
use ltcnet::train::{evaluate, train as fit, Checkpoint, TrainError};
use ltcnet::{Descriptor, SolverConfig};
use serde::Serialize;
use serde_json::json;

use crate::config::{task_name, DataArgs, DataConfig, ModelArgs, ResolvedRun, RunArgs, Task};
use crate::tasks::prepare;
use crate::{CheckSuite, CliError, EvalSplit};

/// An artifact with the run configuration alongside its own fields.
#[derive(Serialize)]
struct WithRun<'a, T: Serialize> {
    #[serde(flatten)]
    inner: &'a T,
    run_config: &'a ResolvedRun,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn train(args: RunArgs) -> Result<(), CliError> {
    // Everything that can be checked without data is checked first.
    args.model.descriptor()?;
    if args.model.neurons.is_none() {
        return Err(CliError::Usage("--neurons is required".into()));
    }
    if args.model.neurons == Some(0) {
        return Err(CliError::Usage("neurons must be ≥ 1".into()));
    }
    let data = args.data.resolve()?;
    let cfg = args.train.resolve()?;
    let out = args.train.out_dir();

    let prepared = prepare(&data, cfg.seed)?;
    let splits = &prepared.splits;
    let (features, outputs) = (splits.train.n_features(), splits.train.target_dim());
    let inputs = match args.model.input_mode()? {
        InputMode::None => None,
        _ => Some(features),
    };
    if let Some(m) = args.model.inputs.filter(|&m| Some(m) != inputs) {
        return Err(CliError::Usage(format!(
            "--inputs {m} does not match the {features} data features"
        )));
    }
    if let Some(k) = args.model.outputs.filter(|&k| k != outputs) {
        return Err(CliError::Usage(format!(
            "--outputs {k} does not match the {outputs} targets"
        )));
    }
    if inputs.is_none() {
        return Err(CliError::Usage(
            "an autonomous model cannot read the task inputs; choose an input mode".into(),
        ));
    }
    let spec = args.model.spec(inputs, Some(outputs))?;
    let descriptor = args.model.descriptor()?.map(|d| d.render());
    let run = ResolvedRun {
        descriptor: descriptor.clone(),
        spec: spec.clone(),
        data,
        train: cfg,
        out: out.clone(),
    };
    print_json(&json!({ "run_config": &run }))?;

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_json(
        &out.join("split.json"),
        &WithRun {
            inner: &splits.manifest,
            run_config: &run,
        },
    )?;
    match fit(&spec, splits, &cfg, descriptor, prepared.standardizer) {
        Ok(outcome) => {
            let report = &outcome.report;
            write_json(
                &out.join("checkpoint.json"),
                &WithRun {
                    inner: &outcome.checkpoint,
                    run_config: &run,
                },
            )?;
            write_json(
                &out.join("report.json"),
                &WithRun {
                    inner: report,
                    run_config: &run,
                },
            )?;
            report
                .save_loss_csv(&out.join("loss.csv"))
                .map_err(anyhow::Error::from)?;
            print_json(&json!({
                "out": out,
                "parameter_count": report.parameter_count,
                "epochs": report.epochs.len(),
                "best_epoch": report.best_epoch,
                "best_val_loss": report.best_val_loss,
                "test": report.test,
                "elapsed_secs": report.elapsed_secs,
            }))?;
            Ok(())
        }
        Err(TrainError::Diverged {
            epoch,
            batch,
            cause,
            report,
        }) => {
            write_json(
                &out.join("report.json"),
                &WithRun {
                    inner: &*report,
                    run_config: &run,
                },
            )?;
            report
                .save_loss_csv(&out.join("loss.csv"))
                .map_err(anyhow::Error::from)?;
            Err(CliError::Runtime(anyhow!(
                "training diverged in epoch {epoch}, batch {batch}: {cause}; partial report in {}",
                out.join("report.json").display()
            )))
        }
        Err(TrainError::Invalid(msg)) => Err(CliError::Usage(msg)),
        Err(e) => Err(CliError::Runtime(e.into())),
    }
}

pub fn eval(path: &Path, which: EvalSplit, overrides: DataArgs) -> Result<(), CliError> {
    let file: PathBuf = if path.is_dir() {
        path.join("checkpoint.json")
    } else {
        path.to_path_buf()
    };
    let ckpt = Checkpoint::load(&file).map_err(|e| CliError::Runtime(e.into()))?;
    let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    let stored: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))?;
    let run: ResolvedRun = serde_json::from_value(
        stored.get("run_config").cloned().unwrap_or_default(),
    )
    .map_err(|e| {
        CliError::Usage(format!(
            "{} carries no usable run_config: {e}",
            file.display()
        ))
    })?;

    let mut data = run.data.clone();
    if let Some(task) = overrides.task {
        data.task = task;
    }
    if let Some(p) = &overrides.data {
        data.data = Some(crate::config::resolve_data_path(p));
    }
    data.rollouts = overrides.rollouts.unwrap_or(data.rollouts);
    data.steps = overrides.steps.unwrap_or(data.steps);
    data.window = overrides.window.unwrap_or(data.window);
    data.test_fraction = overrides.test_fraction.unwrap_or(data.test_fraction);
    data.val_fraction = overrides.val_fraction.unwrap_or(data.val_fraction);
    // The checkpoint's own statistics are reused, never refit.
    let prepared = prepare(
        &DataConfig {
            standardize: false,
            ..data.clone()
        },
        run.train.seed,
    )?;
    let pick = |s: &ltcnet::data::Splits| -> SequenceBatch {
        match which {
            EvalSplit::Train => s.train.clone(),
            EvalSplit::Val => s.val.clone(),
            EvalSplit::Test => s.test.clone(),
        }
    };
    let set = match &ckpt.standardizer {
        Some(st) => st.apply(&pick(&prepared.splits)),
        None => pick(&prepared.splits),
    };
    if set.n_features() != ckpt.spec.n_inputs || set.target_dim() != ckpt.spec.n_outputs {
        return Err(CliError::Usage(format!(
            "data has {} features and {} targets, the checkpoint expects {} and {}",
            set.n_features(),
            set.target_dim(),
            ckpt.spec.n_inputs,
            ckpt.spec.n_outputs
        )));
    }
    let metrics =
        evaluate(&ckpt.spec, &ckpt.params, &set).map_err(|e| CliError::Runtime(e.into()))?;
    print_json(&json!({
        "checkpoint": file,
        "split": format!("{which:?}").to_lowercase(),
        "windows": set.len(),
        "loss": metrics.loss,
        "accuracy": metrics.accuracy,
        "run_config": ResolvedRun { data, ..run },
    }))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct CountRow {
    model: String,
    neurons: usize,
    inputs: usize,
    params: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    na: Option<NaMatch>,
}

#[derive(Debug, Serialize)]
struct NaMatch {
    model: String,
    /// Smallest size with at least as many parameters.
    at_least_neurons: usize,
    at_least_params: usize,
    nearest_neurons: usize,
    nearest_params: usize,
}

fn label(spec: &ModelSpec) -> String {
    let input = match spec.input_mode {
        InputMode::None => String::new(),
        InputMode::Linear => " linear-in".into(),
        InputMode::Synaptic => " synaptic-in".into(),
    };
    format!("{}{input}", describe_family(spec))
}

/// The neural-activation network an SA spec is measured against: the
/// matching packing comparison when there is one, otherwise the same spec
/// rewired. Networks with inputs use `m = n` on the NA side.
fn na_counterpart(spec: &ModelSpec) -> impl Fn(usize) -> ModelSpec {
    let n = spec.n_neurons;
    let same = |a: &ModelSpec, b: &ModelSpec| {
        ModelSpec {
            n_outputs: 1,
            solver: SolverConfig::default(),
            ..a.clone()
        } == ModelSpec {
            n_outputs: 1,
            solver: SolverConfig::default(),
            ..b.clone()
        }
    };
    let known = Comparison::ALL
        .into_iter()
        .find(|c| same(&c.sa_spec(n), spec));
    let base = spec.clone();
    move |k| match known {
        Some(c) => c.na_spec(k),
        None => ModelSpec {
            wiring: Wiring::NeuralActivation,
            n_neurons: k,
            n_inputs: if base.input_mode == InputMode::None {
                0
            } else {
                k
            },
            ..base.clone()
        },
    }
}

pub fn count_params(model: &ModelArgs, compare_na: bool, as_json: bool) -> Result<(), CliError> {
    let neurons = model
        .neurons
        .ok_or_else(|| CliError::Usage("--neurons is required".into()))?;
    if neurons == 0 {
        return Err(CliError::Usage("neurons must be ≥ 1".into()));
    }
    // m = n unless given, the convention the packing figures use.
    let spec = model.spec(Some(neurons), None)?;
    let params = packed_count(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let na = if compare_na {
        if spec.wiring == Wiring::NeuralActivation {
            return Err(CliError::Usage(
                "--compare-na needs a synaptic-activation model".into(),
            ));
        }
        let make = na_counterpart(&spec);
        let count = |k: usize| packed_count(&make(k)).map_err(|e| CliError::Usage(e.to_string()));
        let mut at_least = 1;
        while count(at_least)? < params {
            at_least += 1;
        }
        let nearest = if at_least > 1 && params - count(at_least - 1)? <= count(at_least)? - params
        {
            at_least - 1
        } else {
            at_least
        };
        Some(NaMatch {
            model: label(&make(at_least)),
            at_least_neurons: at_least,
            at_least_params: count(at_least)?,
            nearest_neurons: nearest,
            nearest_params: count(nearest)?,
        })
    } else {
        None
    };
    let row = CountRow {
        model: label(&spec),
        neurons,
        inputs: spec.n_inputs,
        params,
        na,
    };
    if as_json {
        print_json(&row)?;
        return Ok(());
    }
    match &row.na {
        None => {
            println!(
                "{:<24} {:>8} {:>7} {:>8}",
                "model", "neurons", "inputs", "params"
            );
            println!(
                "{:<24} {:>8} {:>7} {:>8}",
                row.model, row.neurons, row.inputs, row.params
            );
        }
        Some(na) => {
            println!(
                "{:<24} {:>8} {:>7} {:>8}   {:<24} {:>10} {:>10} {:>8} {:>8}",
                "model",
                "neurons",
                "inputs",
                "params",
                "na model",
                "na ≥ size",
                "na params",
                "nearest",
                "params"
            );
            println!(
                "{:<24} {:>8} {:>7} {:>8}   {:<24} {:>10} {:>10} {:>8} {:>8}",
                row.model,
                row.neurons,
                row.inputs,
                row.params,
                na.model,
                na.at_least_neurons,
                na.at_least_params,
                na.nearest_neurons,
                na.nearest_params
            );
        }
    }
    Ok(())
}

pub fn check(which: CheckSuite, out: Option<&Path>) -> Result<(), CliError> {
    let suites: Vec<Suite> = match which {
        CheckSuite::Theorems => vec![Suite::Theorems],
        CheckSuite::Gradients => vec![Suite::Gradients],
        CheckSuite::Packing => vec![Suite::Packing],
        CheckSuite::Descriptor => vec![Suite::Descriptor],
        CheckSuite::All => Suite::ALL.to_vec(),
    };
    let reports: Vec<SuiteReport> = suites.into_iter().map(run_suite).collect();
    for r in &reports {
        for c in &r.checks {
            eprintln!(
                "{} {}/{} measured={:e} tolerance={:e} cases={} ({:.2}s)",
                if c.passed { "PASS" } else { "FAIL" },
                r.suite.name(),
                c.name,
                c.measured,
                c.tolerance,
                c.cases,
                c.elapsed_secs
            );
        }
        for note in &r.notes {
            eprintln!("NOTE {}: {note}", r.suite.name());
        }
    }
    let passed = reports.iter().all(|r| r.passed);
    let summary = json!({ "passed": passed, "suites": reports });
    if let Some(path) = out {
        write_json(path, &summary)?;
    }
    print_json(&summary)?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Failed)
    }
}

pub fn parse_descriptor(
    text: &str,
    neurons: Option<usize>,
    inputs: Option<usize>,
) -> Result<(), CliError> {
    let d =
        Descriptor::parse(text).map_err(|e| CliError::Usage(format!("{e}\n{}", e.pointer())))?;
    let mut out = json!({
        "canonical": d.render(),
        "w_mode": d.w_mode,
        "activation": d.activation,
        "factor": d.factor,
        "wiring": d.wiring,
        "input_mode": d.input_mode,
        "learnable_rest": d.learnable_rest,
    });
    if let Some(n) = neurons {
        let spec = d
            .to_model_spec(n, inputs.unwrap_or(n), SolverConfig::default())
            .map_err(|e| CliError::Usage(e.to_string()))?;
        out["spec"] = serde_json::to_value(&spec).map_err(anyhow::Error::from)?;
        out["params"] = json!(packed_count(&spec).map_err(|e| CliError::Usage(e.to_string()))?);
    }
    print_json(&out)?;
    Ok(())
}

pub fn gen_data(
    task: Task,
    rollouts: usize,
    steps: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let kind = match task {
        Task::SyntheticOscillator => SyntheticTask::DampedOscillator,
        Task::SyntheticPendulum | Task::SyntheticPendulumCloning => SyntheticTask::DrivenPendulum,
        other => {
            return Err(CliError::Usage(format!(
                "gen-data writes synthetic tasks only, not {}",
                task_name(other)
            )))
        }
    };
    if rollouts == 0 || steps < 2 {
        return Err(CliError::Usage(
            "need at least one rollout of two or more steps".into(),
        ));
    }
    let data = gen_synthetic(kind, rollouts, steps, seed).map_err(anyhow::Error::from)?;
    let files = save_rollouts(out, &data).map_err(anyhow::Error::from)?;
    let manifest = json!({
        "task": task,
        "rollouts": rollouts,
        "steps": steps,
        "seed": seed,
        "files": files,
    });
    write_json(&out.join("gen-data.json"), &manifest)?;
    print_json(&manifest)?;
    Ok(())
}
