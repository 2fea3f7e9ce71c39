use ltcnet::model::{
    anode_project, anode_wrap, count_params, derivative, init_params, input_map, layout,
    output_map, Activation, Family, Gate, InputMode, ModelError, ModelSpec, ParamName,
    ParameterSet, WMode, Wiring,
};
use ltcnet::tensor::sigmoid;
use ltcnet::{NodeId, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every valid combination of family, wiring, w-mode, gate and input mode.
fn all_specs(n: usize, m: usize) -> Vec<ModelSpec> {
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
                for activation in [Activation::Sigmoid, Activation::Tanh] {
                    for gate in [Gate::None, Gate::OneMinus, Gate::Reversal] {
                        for input_mode in [InputMode::None, InputMode::Linear, InputMode::Synaptic]
                        {
                            for lis in [false, true] {
                                let spec = ModelSpec {
                                    family,
                                    activation,
                                    wiring,
                                    input_mode,
                                    w_mode,
                                    gate,
                                    learnable_rest: lis,
                                    n_neurons: n,
                                    n_inputs: if input_mode == InputMode::None { 0 } else { m },
                                    n_outputs: 2,
                                    n_augment: if family == Family::Anode { 2 } else { 0 },
                                    solver: Default::default(),
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
    }
    out
}

fn get(params: &ParameterSet, name: ParamName) -> Option<&Tensor> {
    params.get(name)
}

/// Straight loop evaluation of one synapse layer, written from the scalar
/// equations and independent of the tape's flattened layout.
fn reference_synapses(
    spec: &ModelSpec,
    params: &ParameterSet,
    pre: &[f64],
    x: &[f64],
    names: (ParamName, ParamName, ParamName, ParamName),
) -> Vec<f64> {
    let n = x.len();
    let (wn, an, bn, en) = names;
    let w = get(params, wn).unwrap();
    let a = get(params, an);
    let b = get(params, bn).unwrap();
    let synaptic = spec.wiring == Wiring::SynapticActivation;
    let e = match (spec.gate, synaptic, en) {
        (Gate::Reversal, true, _) => get(params, en),
        (Gate::Reversal, false, _) => get(params, ParamName::E),
        _ => None,
    };
    let act = |v: f64| match spec.activation {
        Activation::Sigmoid => sigmoid(v),
        Activation::Tanh => v.tanh(),
    };
    let per_pre = |t: &Tensor, j: usize, i: usize| if synaptic { t.get(j, i) } else { t.get(0, j) };
    let mut out = vec![0.0; n];
    for i in 0..n {
        for (j, &xj) in pre.iter().enumerate() {
            let bij = per_pre(b, j, i);
            let cond = match spec.w_mode {
                WMode::Plain => per_pre(a.unwrap(), j, i) * act(w.get(j, i) * xj + bij),
                WMode::R => w.get(j, i) * act(xj + bij),
                WMode::V => w.get(j, i) * act(per_pre(a.unwrap(), j, i) * (xj + bij)),
            };
            let gate = match spec.gate {
                Gate::None => 1.0,
                Gate::OneMinus => 1.0 - x[i],
                Gate::Reversal => {
                    let e = e.unwrap();
                    let eji = if synaptic { e.get(j, i) } else { e.get(0, i) };
                    eji - x[i]
                }
            };
            out[i] += cond * gate;
        }
    }
    out
}

fn reference_derivative(
    spec: &ModelSpec,
    params: &ParameterSet,
    x: &[f64],
    u: Option<&[f64]>,
) -> Vec<f64> {
    use ParamName::*;
    let n = x.len();
    let mut drive = reference_synapses(spec, params, x, x, (W, A, B, E));
    match spec.input_mode {
        InputMode::None => {}
        InputMode::Linear => {
            let (am, bias) = (get(params, InMatrix).unwrap(), get(params, InBias).unwrap());
            let u = u.unwrap();
            for i in 0..n {
                drive[i] += bias.get(0, i)
                    + u.iter()
                        .enumerate()
                        .map(|(j, uj)| uj * am.get(j, i))
                        .sum::<f64>();
            }
        }
        InputMode::Synaptic => {
            let inp = reference_synapses(spec, params, u.unwrap(), x, (InW, InA, InB, InE));
            drive.iter_mut().zip(inp).for_each(|(d, v)| *d += v);
        }
    }
    match spec.family {
        Family::NeuralOde | Family::Anode => drive,
        Family::ActRnn | Family::CtRnn => {
            let wl = get(params, Leak).unwrap();
            let rest = get(params, Rest);
            (0..n)
                .map(|i| drive[i] - wl.get(0, i) * (x[i] - rest.map_or(0.0, |r| r.get(0, i))))
                .collect()
        }
        Family::Ltc => {
            let (wl, rest, c) = (
                get(params, Leak).unwrap(),
                get(params, Rest).unwrap(),
                get(params, Capacitance).unwrap(),
            );
            (0..n)
                .map(|i| (wl.get(0, i) * (rest.get(0, i) - x[i]) + drive[i]) / c.get(0, i))
                .collect()
        }
    }
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

#[test]
fn tape_derivative_matches_loop_reference_for_every_combination() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let specs = all_specs(3, 2);
    assert!(specs.len() > 100, "only {} combinations", specs.len());
    for (k, spec) in specs.iter().enumerate() {
        let mut params = init_params(spec, k as u64).unwrap();
        // Exercise non-trivial rest potentials too.
        if let Some(rest) = params.get_mut(ParamName::Rest) {
            rest.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
        let x = random_vec(&mut rng, spec.state_dim());
        let u = (spec.input_mode != InputMode::None).then(|| random_vec(&mut rng, spec.n_inputs));
        let got = derivative(spec, &params, &x, u.as_deref()).unwrap();
        let want = reference_derivative(spec, &params, &x, u.as_deref());
        for (g, w) in got.iter().zip(&want) {
            assert!(
                (g - w).abs() <= 1e-12 * w.abs().max(1.0),
                "{spec:?}\n{got:?} vs {want:?}"
            );
        }
    }
}

#[test]
fn leak_only_ltc() {
    let spec = ModelSpec::ltc(1, 0, InputMode::None);
    let mut params = init_params(&spec, 0).unwrap();
    params.fill(ParamName::W, 0.0).unwrap();
    params.fill(ParamName::Leak, 1.0).unwrap();
    assert_eq!(
        derivative(&spec, &params, &[0.5], None).unwrap(),
        vec![-0.5]
    );
}

#[test]
fn ltc_synapse_closed_at_reversal_potential() {
    let spec = ModelSpec::ltc(1, 0, InputMode::None);
    let mut params = init_params(&spec, 4).unwrap();
    params.fill(ParamName::Leak, 0.0).unwrap();
    let e = params.get(ParamName::E).unwrap().get(0, 0);
    assert_eq!(derivative(&spec, &params, &[e], None).unwrap(), vec![0.0]);
}

#[test]
fn sa_ct_rnn_single_neuron_hand_value() {
    let mut spec = ModelSpec::ctrnn(1, 0, InputMode::None);
    spec.family = Family::ActRnn;
    let mut params = init_params(&spec, 0).unwrap();
    params.fill(ParamName::Leak, 0.5).unwrap();
    params.fill(ParamName::W, 1.0).unwrap();
    params.fill(ParamName::A, 1.0).unwrap();
    params.fill(ParamName::B, 0.0).unwrap();
    // −0.5·0 + 1·σ(1·(0 + 0)) = 0.5
    assert_eq!(derivative(&spec, &params, &[0.0], None).unwrap(), vec![0.5]);
}

#[test]
fn star_gate_closes_at_one() {
    let mut spec = ModelSpec::ctrnn(2, 1, InputMode::Synaptic);
    spec.gate = Gate::OneMinus;
    let mut params = init_params(&spec, 1).unwrap();
    params.fill(ParamName::Leak, 0.0).unwrap();
    let d = derivative(&spec, &params, &[1.0, 1.0], Some(&[0.3])).unwrap();
    assert_eq!(d, vec![0.0, 0.0]);
}

/// Copies an NA parameter set into the SA layout, tying each presynaptic
/// row (slope, bias) and each postsynaptic column (reversal potential).
fn tie_to_synaptic(na: &ModelSpec, params: &ParameterSet) -> (ModelSpec, ParameterSet) {
    let sa = na.clone().with_wiring(Wiring::SynapticActivation);
    let mut out = init_params(&sa, 0).unwrap();
    for table in out.tables_mut() {
        // in_e has no NA counterpart; it is filled from e below.
        let Some(src) = params.get(table.name) else {
            continue;
        };
        let (rows, cols) = table.value.shape();
        if src.shape() == (rows, cols) {
            table.value = src.clone();
            continue;
        }
        for j in 0..rows {
            for i in 0..cols {
                let v = match table.name {
                    ParamName::E | ParamName::InE => src.get(0, i),
                    _ => src.get(0, j),
                };
                table.value.set(j, i, v);
            }
        }
    }
    // NA sensory LTC synapses reuse the recurrent reversal potentials.
    if let (Some(e), true) = (
        params.get(ParamName::E),
        na.input_mode == InputMode::Synaptic,
    ) {
        let m = na.n_inputs;
        let n = na.state_dim();
        let mut in_e = Tensor::zeros(m, n);
        for j in 0..m {
            for i in 0..n {
                in_e.set(j, i, e.get(0, i));
            }
        }
        if out.get(ParamName::InE).is_some() {
            out.set(ParamName::InE, in_e).unwrap();
        }
    }
    (sa, out)
}

#[test]
fn tied_synaptic_activation_reproduces_neural_activation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for spec in all_specs(4, 3)
        .into_iter()
        .filter(|s| s.wiring == Wiring::NeuralActivation)
    {
        let params = init_params(&spec, rng.gen()).unwrap();
        let (sa, sa_params) = tie_to_synaptic(&spec, &params);
        let x = random_vec(&mut rng, spec.state_dim());
        let u = (spec.input_mode != InputMode::None).then(|| random_vec(&mut rng, spec.n_inputs));
        let na_d = derivative(&spec, &params, &x, u.as_deref()).unwrap();
        let sa_d = derivative(&sa, &sa_params, &x, u.as_deref()).unwrap();
        for (p, q) in na_d.iter().zip(&sa_d) {
            assert!(
                (p - q).abs() <= 1e-13 * p.abs().max(1.0),
                "{spec:?}: {na_d:?} vs {sa_d:?}"
            );
        }
    }
}

#[test]
fn reference_packing_counts() {
    let act = |n, wiring, w_mode| {
        let mut s = ModelSpec::ctrnn(n, 0, InputMode::None)
            .with_wiring(wiring)
            .with_w_mode(w_mode);
        s.family = Family::ActRnn;
        s
    };
    let sa = Wiring::SynapticActivation;
    let na = Wiring::NeuralActivation;
    assert_eq!(count_params(&act(32, sa, WMode::V)).unwrap(), 3104);
    assert_eq!(count_params(&act(64, na, WMode::R)).unwrap(), 4224);
    assert_eq!(
        count_params(&ModelSpec::ltc(32, 0, InputMode::None)).unwrap(),
        4192
    );
    assert_eq!(
        count_params(&ModelSpec::ltc(32, 32, InputMode::Synaptic)).unwrap(),
        8288
    );
    assert_eq!(
        count_params(&ModelSpec::ltc(32, 32, InputMode::Linear)).unwrap(),
        5216
    );
    assert_eq!(
        count_params(&ModelSpec::ctrnn(32, 32, InputMode::Synaptic)).unwrap(),
        6176
    );
    let na_ct = |n, mode| ModelSpec::ctrnn(n, n, mode).with_wiring(na);
    assert_eq!(count_params(&na_ct(63, InputMode::Synaptic)).unwrap(), 8253);
    assert_eq!(count_params(&na_ct(51, InputMode::Linear)).unwrap(), 5355);
    assert_eq!(count_params(&na_ct(54, InputMode::Synaptic)).unwrap(), 6102);
}

#[test]
fn count_matches_enumeration_of_initialized_tables() {
    for n in [1, 2, 8, 32] {
        for m in [1, 2, 8, 32] {
            for spec in all_specs(n, m) {
                let params = init_params(&spec, 0).unwrap();
                assert_eq!(
                    count_params(&spec).unwrap(),
                    params.packing_count(),
                    "{spec:?}"
                );
            }
        }
    }
}

#[test]
fn initialization_bounds_hold_over_many_draws() {
    let spec = ModelSpec::ltc(100, 100, InputMode::Synaptic);
    let params = init_params(&spec, 2024).unwrap();
    let w = params.get(ParamName::W).unwrap();
    let in_w = params.get(ParamName::InW).unwrap();
    assert!(w.len() + in_w.len() >= 100_000 / 5);
    let within = |t: &Tensor, lo: f64, hi: f64| t.data().iter().all(|&v| (lo..=hi).contains(&v));
    // 10⁵ draws of w across five seeds.
    for seed in 0..5 {
        let p = init_params(&spec, seed).unwrap();
        assert!(within(p.get(ParamName::W).unwrap(), 0.01, 1.0));
        assert!(within(p.get(ParamName::InW).unwrap(), 0.01, 1.0));
        assert!(within(p.get(ParamName::B).unwrap(), 0.3, 0.8));
        assert!(within(p.get(ParamName::A).unwrap(), 3.0, 8.0));
        assert!(within(p.get(ParamName::Leak).unwrap(), 0.01, 1.0));
        assert!(within(p.get(ParamName::OutMatrix).unwrap(), -0.1, 0.1));
        assert!(p
            .get(ParamName::OutBias)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }
}

#[test]
fn layout_shapes_follow_wiring() {
    let sa = ModelSpec::ltc(5, 3, InputMode::Synaptic);
    let na = sa.clone().with_wiring(Wiring::NeuralActivation);
    let shape = |spec: &ModelSpec, name| {
        layout(spec)
            .into_iter()
            .find(|l| l.name == name)
            .map(|l| (l.rows, l.cols))
    };
    assert_eq!(shape(&sa, ParamName::A), Some((5, 5)));
    assert_eq!(shape(&na, ParamName::A), Some((1, 5)));
    assert_eq!(shape(&na, ParamName::W), Some((5, 5)));
    assert_eq!(shape(&sa, ParamName::InE), Some((3, 5)));
    assert_eq!(shape(&na, ParamName::InE), None);
    assert_eq!(shape(&na, ParamName::InA), Some((1, 3)));
}

#[test]
fn linear_input_map_hand_values() {
    let spec = ModelSpec::ctrnn(1, 1, InputMode::Linear);
    let mut params = init_params(&spec, 0).unwrap();
    params
        .set(ParamName::InMatrix, Tensor::new(1, 1, vec![2.0]).unwrap())
        .unwrap();
    params
        .set(ParamName::InBias, Tensor::row(vec![1.0]))
        .unwrap();
    assert_eq!(
        input_map(&spec, &params, &[3.0], &[0.0]).unwrap(),
        vec![7.0]
    );

    let spec = ModelSpec::ctrnn(3, 3, InputMode::Linear);
    let mut params = init_params(&spec, 0).unwrap();
    params
        .set(ParamName::InMatrix, Tensor::identity(3))
        .unwrap();
    let u = [0.25, -1.0, 4.0];
    assert_eq!(
        input_map(&spec, &params, &u, &[0.0; 3]).unwrap(),
        u.to_vec()
    );
}

#[test]
fn synaptic_ltc_input_closed_at_reversal() {
    let spec = ModelSpec::ltc(2, 2, InputMode::Synaptic);
    let mut params = init_params(&spec, 8).unwrap();
    params.fill(ParamName::InE, 0.7).unwrap();
    let contribution = input_map(&spec, &params, &[0.4, -0.9], &[0.7, 0.7]).unwrap();
    assert_eq!(contribution, vec![0.0, 0.0]);
}

#[test]
fn output_map_is_affine() {
    let spec = ModelSpec::ltc(2, 1, InputMode::Linear).with_outputs(1);
    let mut params = init_params(&spec, 0).unwrap();
    params
        .set(ParamName::OutMatrix, Tensor::column(vec![2.0, -1.0]))
        .unwrap();
    params
        .set(ParamName::OutBias, Tensor::row(vec![0.5]))
        .unwrap();
    assert_eq!(output_map(&spec, &params, &[1.0, 3.0]).unwrap(), vec![-0.5]);
}

#[test]
fn anode_wrapping() {
    assert_eq!(
        anode_wrap(&[1.0, 2.0], 2).unwrap(),
        vec![1.0, 2.0, 0.0, 0.0]
    );
    assert_eq!(anode_wrap(&[], 3).unwrap(), vec![0.0; 3]);
    assert!(anode_wrap(&[1.0], 0).is_err());
    let v = [0.3, -0.2, 5.0];
    assert_eq!(
        anode_project(&anode_wrap(&v, 4).unwrap(), &[0, 1, 2]).unwrap(),
        v.to_vec()
    );
    assert_eq!(
        anode_project(&[1.0], &[3]),
        Err(ModelError::Selector { index: 3, len: 1 })
    );
}

#[test]
fn nan_state_is_rejected() {
    let spec = ModelSpec::ltc(2, 0, InputMode::None);
    let params = init_params(&spec, 0).unwrap();
    assert!(matches!(
        derivative(&spec, &params, &[0.0, f64::NAN], None),
        Err(ModelError::NonFinite(_))
    ));
    assert!(matches!(
        derivative(&spec, &params, &[0.0], None),
        Err(ModelError::InputShape(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clamp_is_idempotent(seed in 0u64..1000, noise in prop::collection::vec(-2.0f64..2.0, 64)) {
        let spec = ModelSpec::ltc(4, 2, InputMode::Synaptic);
        let mut params = init_params(&spec, seed).unwrap();
        for (table, chunk) in params.tables_mut().iter_mut().zip(noise.chunks(4).cycle()) {
            for (v, d) in table.value.data_mut().iter_mut().zip(chunk.iter().cycle()) {
                *v += d;
            }
        }
        params.clamp();
        let once = params.clone();
        prop_assert_eq!(params.clamp(), 0);
        prop_assert_eq!(params, once);
    }

    #[test]
    fn gating_nullity(seed in 0u64..1000, j in 0usize..3, i in 0usize..3, xi in -1.0f64..1.0) {
        // Synapse (j, i) carries no current when x_i equals its reversal potential.
        let spec = ModelSpec::ltc(3, 0, InputMode::None);
        let mut params = init_params(&spec, seed).unwrap();
        params.get_mut(ParamName::E).unwrap().set(j, i, xi);
        let mut x = vec![0.1, -0.4, 0.6];
        x[i] = xi;
        let full = derivative(&spec, &params, &x, None).unwrap();
        params.get_mut(ParamName::W).unwrap().set(j, i, 0.0);
        let without = derivative(&spec, &params, &x, None).unwrap();
        prop_assert_eq!(full[i], without[i]);
    }

    #[test]
    fn ltc_current_sign_follows_driving_force(seed in 0u64..1000, x in -0.99f64..0.99, excitatory: bool) {
        let spec = ModelSpec::ltc(1, 0, InputMode::None);
        let mut params = init_params(&spec, seed).unwrap();
        params.fill(ParamName::Leak, 0.0).unwrap();
        params.fill(ParamName::E, if excitatory { 1.0 } else { -1.0 }).unwrap();
        let d = derivative(&spec, &params, &[x], None).unwrap()[0];
        if excitatory { prop_assert!(d > 0.0) } else { prop_assert!(d < 0.0) }
    }
}

/// Central differences of `Σ_k c_k·ẋ_k` with respect to every parameter
/// entry and every state entry, compared with the tape gradient.
#[test]
fn derivative_gradients_match_finite_differences() {
    use ltcnet::model::{derivative_batch, derivative_node, BoundParams};
    use ltcnet::Tape;

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 1e-6;
    for spec in all_specs(3, 2) {
        let params = init_params(&spec, rng.gen()).unwrap();
        let x = Tensor::new(
            2,
            spec.state_dim(),
            random_vec(&mut rng, 2 * spec.state_dim()),
        )
        .unwrap();
        let u = (spec.input_mode != InputMode::None).then(|| {
            Tensor::new(2, spec.n_inputs, random_vec(&mut rng, 2 * spec.n_inputs)).unwrap()
        });
        let weights: Vec<f64> = (0..x.len()).map(|k| 0.5 + 0.3 * k as f64).collect();
        let objective = |params: &ParameterSet, x: &Tensor| -> f64 {
            let d = derivative_batch(&spec, params, x, u.as_ref()).unwrap();
            d.data().iter().zip(&weights).map(|(d, w)| d * w).sum()
        };

        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, &spec, &params).unwrap();
        let xn = tape.leaf(x.clone());
        let un = u.as_ref().map(|u| tape.leaf(u.clone()));
        let d = derivative_node(&mut tape, &spec, &bound, xn, un).unwrap();
        let wn = tape.leaf(Tensor::new(x.rows(), x.cols(), weights.clone()).unwrap());
        let prod = tape.mul(d, wn).unwrap();
        let loss = tape.sum_all(prod);
        let mut ids: Vec<NodeId> = bound.leaves().iter().map(|&(_, id)| id).collect();
        ids.push(xn);
        let grads = tape.gradient(loss, &ids).unwrap();

        let check = |analytic: f64, numeric: f64, what: &str| {
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2);
            assert!(err < 1e-5, "{spec:?} {what}: {analytic} vs {numeric}");
        };
        for (t, table) in params.tables().iter().enumerate() {
            for k in 0..table.value.len() {
                let mut plus = params.clone();
                plus.tables_mut()[t].value.data_mut()[k] += h;
                let mut minus = params.clone();
                minus.tables_mut()[t].value.data_mut()[k] -= h;
                let numeric = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
                check(grads[t].data()[k], numeric, table.name.as_str());
            }
        }
        for k in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[k] += h;
            let mut minus = x.clone();
            minus.data_mut()[k] -= h;
            let numeric = (objective(&params, &plus) - objective(&params, &minus)) / (2.0 * h);
            check(grads.last().unwrap().data()[k], numeric, "x");
        }
    }
}
