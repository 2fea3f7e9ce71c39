//! Named verification suites with fixed seeds, sizes and tolerances.

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_theorem_1, check_theorem_2, gradcheck, leaky_deviation, linearize_at, rest_distances,
    AnalysisError, Comparison, LeakRegime,
};
use crate::descriptor::{Descriptor, Factor};
use crate::model::{
    count_params, derivative, describe_family, init_params, Activation, Family, Gate, InputMode,
    ModelSpec, ParamName, ParameterSet, WMode, Wiring,
};
use crate::solver::SolverConfig;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Theorems,
    Gradients,
    Packing,
    Descriptor,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::Theorems,
        Suite::Gradients,
        Suite::Packing,
        Suite::Descriptor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Theorems => "theorems",
            Suite::Gradients => "gradients",
            Suite::Packing => "packing",
            Suite::Descriptor => "descriptor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Worst value seen; compared against `tolerance`.
    pub measured: f64,
    pub tolerance: f64,
    pub cases: usize,
    pub detail: String,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
    /// Observations that are reported but not asserted.
    pub notes: Vec<String>,
}

pub fn run_suite(suite: Suite) -> SuiteReport {
    let (checks, notes) = match suite {
        Suite::Theorems => (theorem_checks(), Vec::new()),
        Suite::Gradients => (vec![timed("rollout-gradients", gradient_check)], Vec::new()),
        Suite::Packing => packing_checks(),
        Suite::Descriptor => (descriptor_checks(), Vec::new()),
    };
    SuiteReport {
        suite,
        passed: checks.iter().all(|c| c.passed),
        checks,
        notes,
    }
}

/// Body of a check: (passed, measured, tolerance, cases, detail).
type Verdict = (bool, f64, f64, usize, String);

fn timed(name: &str, f: impl FnOnce() -> Result<Verdict, AnalysisError>) -> CheckOutcome {
    let start = Instant::now();
    let (passed, measured, tolerance, cases, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, f64::NAN, f64::NAN, 0, format!("error: {e}")),
    };
    CheckOutcome {
        name: name.to_string(),
        passed,
        measured,
        tolerance,
        cases,
        detail,
        elapsed_secs: start.elapsed().as_secs_f64(),
    }
}

fn uniform(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

fn square(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    Tensor::new(n, n, uniform(rng, n * n, -1.0, 1.0)).expect("sized")
}

fn within(worst: f64, tolerance: f64, cases: usize, detail: String) -> Verdict {
    (worst <= tolerance, worst, tolerance, cases, detail)
}

const STEPS: usize = 100;
const DT: f64 = 0.1;
const INSTANCES: usize = 100;

fn theorem_checks() -> Vec<CheckOutcome> {
    vec![
        timed("activation-placement", || {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut worst = 0.0f64;
            for trial in 0..INSTANCES {
                let n = 3 + trial % 4;
                let w = square(&mut rng, n);
                let b = uniform(&mut rng, n, -1.0, 1.0);
                let y0 = uniform(&mut rng, n, -2.0, 2.0);
                worst = worst.max(check_theorem_1(&w, &b, &y0, STEPS, DT)?);
            }
            Ok(within(
                worst,
                1e-9,
                INSTANCES,
                format!("max ‖x − W·y‖∞ over {STEPS} Euler steps"),
            ))
        }),
        timed("activation-placement-with-leak", || {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let mut worst = 0.0f64;
            for trial in 0..INSTANCES {
                let n = 3 + trial % 4;
                let b = uniform(&mut rng, n, -1.0, 1.0);
                let y0 = uniform(&mut rng, n, -2.0, 2.0);
                let w = square(&mut rng, n);
                let (dev, regime) = check_theorem_2(&vec![0.5; n], &w, &b, &y0, STEPS, DT)?;
                debug_assert_eq!(regime, LeakRegime::Uniform);
                worst = worst.max(dev);
                let mut diag = Tensor::zeros(n, n);
                for i in 0..n {
                    diag.set(i, i, rng.gen_range(-1.5..1.5));
                }
                let leak = uniform(&mut rng, n, 0.0, 2.0);
                worst = worst.max(check_theorem_2(&leak, &diag, &b, &y0, STEPS, DT)?.0);
            }
            Ok(within(
                worst,
                1e-9,
                2 * INSTANCES,
                "uniform leak and diagonal W".into(),
            ))
        }),
        timed("non-commuting-leak-detected", || {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let w = square(&mut rng, 4);
            let (leak, b, y0) = ([0.1, 0.9, 0.4, 1.5], [0.2; 4], [1.0, -1.0, 0.5, 2.0]);
            let refused = matches!(
                check_theorem_2(&leak, &w, &b, &y0, STEPS, DT),
                Err(AnalysisError::NonCommuting)
            );
            let dev = leaky_deviation(&leak, &w, &b, &y0, STEPS, DT)?;
            Ok((
                refused && dev > 1e-2,
                dev,
                1e-2,
                1,
                "deviation must exceed the tolerance and the check must refuse".into(),
            ))
        }),
        timed("linearization", || {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let mut worst = 0.0f64;
            let cases = 1000;
            for trial in 0..cases {
                let spec = random_ltc(&mut rng);
                let mut params = init_params(&spec, trial as u64)?;
                randomize(&mut params, &mut rng);
                let x = uniform(&mut rng, spec.n_neurons, -2.0, 2.0);
                let u = (spec.input_mode != InputMode::None)
                    .then(|| uniform(&mut rng, spec.n_inputs, -2.0, 2.0));
                let view = linearize_at(&spec, &params, &x, u.as_deref())?;
                let direct = derivative(&spec, &params, &x, u.as_deref())?;
                for (i, (r, d)) in view.reconstruct(&x).iter().zip(&direct).enumerate() {
                    worst = worst.max((r - d).abs() / view.magnitude[i].max(f64::MIN_POSITIVE));
                }
            }
            Ok(within(
                worst,
                1e-12,
                cases,
                "|slope·x + intercept − ẋ| relative to the term magnitudes".into(),
            ))
        }),
        timed("leak-contraction", || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let solver = SolverConfig { dt: DT, unfolds: 1 };
            let (cases, mut violations) = (1000, 0usize);
            for trial in 0..cases {
                let n = rng.gen_range(1..6);
                let mut spec = ModelSpec::ltc(n, 0, InputMode::None).with_solver(solver);
                spec.learnable_rest = rng.gen_bool(0.5);
                let mut params = init_params(&spec, trial as u64)?;
                params.fill(ParamName::W, 0.0)?;
                params.set(
                    ParamName::Leak,
                    Tensor::row(uniform(&mut rng, n, 0.01, 0.99 / DT)),
                )?;
                if spec.learnable_rest {
                    params.set(
                        ParamName::Rest,
                        Tensor::row(uniform(&mut rng, n, -1.0, 1.0)),
                    )?;
                }
                let x0 = uniform(&mut rng, n, -3.0, 3.0);
                let d = rest_distances(&spec, &params, &x0, 50)?;
                if d.windows(2).any(|p| !(p[1] < p[0] || p[0] == 0.0)) {
                    violations += 1;
                }
            }
            Ok(within(
                violations as f64,
                0.0,
                cases,
                "draws where ‖x − e_l‖∞ failed to shrink".into(),
            ))
        }),
    ]
}

/// A random LTC drawn across wirings, synapse modes and input modes.
fn random_ltc(rng: &mut ChaCha8Rng) -> ModelSpec {
    let n = rng.gen_range(1..6);
    let input_mode = [InputMode::None, InputMode::Linear, InputMode::Synaptic][rng.gen_range(0..3)];
    let m = if input_mode == InputMode::None {
        0
    } else {
        rng.gen_range(1..4)
    };
    let wiring = [Wiring::NeuralActivation, Wiring::SynapticActivation][rng.gen_range(0..2)];
    let w_mode = [WMode::Plain, WMode::R, WMode::V][rng.gen_range(0..3)];
    let mut spec = ModelSpec::ltc(n, m, input_mode)
        .with_wiring(wiring)
        .with_w_mode(w_mode);
    spec.learnable_rest = rng.gen_bool(0.5);
    spec
}

fn randomize(params: &mut ParameterSet, rng: &mut ChaCha8Rng) {
    for t in params.tables_mut() {
        let (lo, hi) = match (t.name, t.nonneg) {
            (ParamName::Capacitance, _) => (0.5, 2.0),
            (_, true) => (0.0, 2.0),
            (_, false) => (-1.5, 1.5),
        };
        t.value
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(lo..hi));
    }
}

/// Every valid model combination at n = 2 (m = 2 with inputs).
pub fn all_combinations() -> Vec<ModelSpec> {
    let mut out = Vec::new();
    for family in [
        Family::NeuralOde,
        Family::Anode,
        Family::ActRnn,
        Family::CtRnn,
        Family::Ltc,
    ] {
        for wiring in [Wiring::NeuralActivation, Wiring::SynapticActivation] {
            for w_mode in [WMode::Plain, WMode::R, WMode::V] {
                for gate in [Gate::None, Gate::OneMinus, Gate::Reversal] {
                    for input_mode in [InputMode::None, InputMode::Linear, InputMode::Synaptic] {
                        for learnable_rest in [false, true] {
                            let spec = ModelSpec {
                                family,
                                activation: Activation::Sigmoid,
                                wiring,
                                input_mode,
                                w_mode,
                                gate,
                                learnable_rest,
                                n_neurons: 2,
                                n_inputs: if input_mode == InputMode::None { 0 } else { 2 },
                                n_outputs: 1,
                                n_augment: if family == Family::Anode { 1 } else { 0 },
                                solver: SolverConfig {
                                    dt: 0.1,
                                    unfolds: 2,
                                },
                            };
                            if spec.validate().is_ok() {
                                out.push(spec);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn gradient_check() -> Result<Verdict, AnalysisError> {
    let specs = all_combinations();
    let mut worst = (0.0f64, String::new());
    for spec in &specs {
        let g = gradcheck(spec, 11, 20, 1e-6)?;
        if g.relative_error >= worst.0 {
            worst = (
                g.relative_error,
                format!(
                    "{} {:?}/{:?}/{:?}",
                    describe_family(spec),
                    spec.w_mode,
                    spec.gate,
                    spec.input_mode
                ),
            );
        }
    }
    Ok((
        worst.0 < 1e-3,
        worst.0,
        1e-3,
        specs.len(),
        format!("20-step rollout, central differences; worst: {}", worst.1),
    ))
}

fn packing_checks() -> (Vec<CheckOutcome>, Vec<String>) {
    let exact = |name: &str, spec: ModelSpec, want: usize| {
        timed(name, || {
            let got = count_params(&spec)?;
            Ok((
                got == want,
                got as f64,
                want as f64,
                1,
                format!("expected exactly {want}"),
            ))
        })
    };
    let na = |c: Comparison| c.na_spec(c.quoted().na_neurons);
    let checks = vec![
        exact("sa-act-rnn-32", Comparison::ActRnn.sa_spec(32), 3104),
        exact(
            "sa-ltc-autonomous-32",
            Comparison::AutonomousLtc.sa_spec(32),
            4192,
        ),
        exact(
            "sa-ct-rnn-synaptic-32",
            Comparison::CtRnnSynaptic.sa_spec(32),
            6176,
        ),
        exact(
            "sa-ltc-synaptic-32",
            Comparison::LtcSynaptic.sa_spec(32),
            8288,
        ),
        exact("sa-ltc-linear-32", Comparison::LtcLinear.sa_spec(32), 5216),
        exact("na-act-rnn-64", na(Comparison::AutonomousLtc), 4224),
        exact("na-ct-rnn-synaptic-63", na(Comparison::LtcSynaptic), 8253),
        exact("na-ct-rnn-linear-51", na(Comparison::LtcLinear), 5355),
    ];
    let mut notes = Vec::new();
    for c in [Comparison::ActRnn, Comparison::CtRnnSynaptic] {
        let q = c.quoted();
        let ours = c.na_count(q.na_neurons);
        notes.push(format!(
            "{}: quoted {} parameters at {} neurons; the same network with m = n counts {} here (not asserted)",
            c.label(),
            q.na_count,
            q.na_neurons,
            ours
        ));
    }
    (checks, notes)
}

fn descriptor_checks() -> Vec<CheckOutcome> {
    vec![
        timed("enumeration-round-trip", || {
            let all = Descriptor::enumerate();
            let texts: HashSet<String> = all.iter().map(Descriptor::render).collect();
            let mut failures = 0usize;
            for d in &all {
                if Descriptor::parse(&d.render()).ok().as_ref() != Some(d) {
                    failures += 1;
                }
            }
            let ok = all.len() == 144 && texts.len() == 144 && failures == 0;
            Ok((
                ok,
                failures as f64,
                0.0,
                all.len(),
                format!("{} strings, {} distinct", all.len(), texts.len()),
            ))
        }),
        timed("valid-combinations", || {
            let invalid: Vec<String> = Descriptor::enumerate()
                .into_iter()
                .filter(|d| d.to_model_spec(4, 2, SolverConfig::default()).is_err())
                .map(|d| d.render())
                .collect();
            let ok = invalid.len() == 24 && invalid.iter().all(|s| s.contains("tanh+"));
            Ok((
                ok,
                invalid.len() as f64,
                24.0,
                144,
                "only tanh with the reversal factor is rejected".into(),
            ))
        }),
        timed("example-strings", || {
            let ltc = Descriptor::parse("ctrnn_vsigm+s_synaptic")
                .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
            let ltc_spec = ltc.to_model_spec(32, 32, SolverConfig::default())?;
            let vanilla = Descriptor::parse("ctrnn_vtanh_linear")
                .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
            let v_spec = vanilla.to_model_spec(8, 3, SolverConfig::default())?;
            let ok = ltc.factor == Factor::Plus
                && ltc_spec.family == Family::Ltc
                && ltc_spec.gate == Gate::Reversal
                && ltc_spec.wiring == Wiring::SynapticActivation
                && ltc_spec.input_mode == InputMode::Synaptic
                && count_params(&ltc_spec)? == 8288
                && v_spec.family == Family::CtRnn
                && v_spec.gate == Gate::None
                && v_spec.activation == Activation::Tanh
                && v_spec.wiring == Wiring::NeuralActivation
                && v_spec.input_mode == InputMode::Linear;
            Ok((
                ok,
                0.0,
                0.0,
                2,
                "ctrnn_vsigm+s_synaptic and ctrnn_vtanh_linear".into(),
            ))
        }),
        timed("error-spans", || {
            let cases = [
                ("ctrnn_xsigm_linear", 6..11),
                ("ctrnn_vsigm_cubic", 12..17),
                ("ctrnn_vsigm", 11..11),
            ];
            let bad = cases
                .iter()
                .filter(|(s, span)| {
                    Descriptor::parse(s).err().map(|e| e.span) != Some(span.clone())
                })
                .count();
            Ok((
                bad == 0,
                bad as f64,
                0.0,
                cases.len(),
                "malformed strings report the offending span".into(),
            ))
        }),
    ]
}
