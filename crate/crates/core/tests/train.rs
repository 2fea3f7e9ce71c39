use ltcnet::data::{
    Batch, BatchTargets, SequenceBatch, SplitManifest, Splits, Standardizer, Targets, Window,
};
use ltcnet::model::{init_params, InputMode, ModelSpec, ParamName, ParameterSet, WMode, Wiring};
use ltcnet::train::{
    adam_step, cross_entropy_batch, evaluate, loss_and_grad, mse_loss, predict, train, AdamConfig,
    Checkpoint, OptimizerState, TrainConfig, TrainError,
};
use ltcnet::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Compensated summation, accurate to a couple of ulps of the true sum.
fn neumaier(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::new(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.gen_range(-scale..scale))
            .collect(),
    )
    .unwrap()
}

/// One window per source, starting at 0.
fn whole_sequences(sources: Vec<Tensor>, targets: Targets) -> SequenceBatch {
    let seq_len = sources[0].rows();
    SequenceBatch {
        windows: (0..sources.len())
            .map(|source| Window { source, start: 0 })
            .collect(),
        sources,
        seq_len,
        targets,
        targets_are_features: false,
    }
}

fn splits_of(train: SequenceBatch, val: SequenceBatch, test: SequenceBatch) -> Splits {
    Splits {
        manifest: SplitManifest {
            seed: 0,
            test_fraction: 0.15,
            val_fraction: 0.1,
            train: (0..train.sources.len()).collect(),
            val: vec![],
            test: vec![],
        },
        train,
        val,
        test,
    }
}

fn sensory_ltc(n: usize) -> ModelSpec {
    ModelSpec::ltc(n, 1, InputMode::Synaptic)
}

/// Parameters of a single-neuron LTC whose recurrent synapse is silent, so
/// the state is a leaky integrator of one sensory current.
fn leaky_teacher(spec: &ModelSpec, seed: u64) -> ParameterSet {
    let mut p = init_params(spec, seed).unwrap();
    for (name, v) in [
        (ParamName::W, 0.0),
        (ParamName::Leak, 0.5),
        (ParamName::InW, 1.0),
        (ParamName::InA, 2.0),
        (ParamName::InB, 0.0),
        (ParamName::InE, 1.0),
        (ParamName::OutMatrix, 1.0),
        (ParamName::OutBias, 0.0),
    ] {
        p.fill(name, v).unwrap();
    }
    p
}

fn teacher_set(
    spec: &ModelSpec,
    teacher: &ParameterSet,
    count: usize,
    len: usize,
    rng: &mut ChaCha8Rng,
) -> SequenceBatch {
    let sources: Vec<Tensor> = (0..count)
        .map(|_| random_tensor(rng, len, 1, 1.0))
        .collect();
    let mut set = whole_sequences(sources, Targets::Values(Tensor::zeros(count, 1)));
    let all: Vec<usize> = (0..count).collect();
    let y = predict(spec, teacher, &set.batch(&all).inputs).unwrap();
    set.targets = Targets::Values(y);
    set
}

#[test]
fn zero_gradient_leaves_everything_unchanged() {
    let spec = sensory_ltc(3);
    let mut params = init_params(&spec, 1).unwrap();
    let before = params.clone();
    let mut opt = OptimizerState::new(&params, AdamConfig::default());
    let zeros: Vec<Tensor> = params
        .tables()
        .iter()
        .map(|t| Tensor::zeros(t.value.rows(), t.value.cols()))
        .collect();
    for _ in 0..3 {
        assert_eq!(adam_step(&mut opt, &mut params, &zeros).unwrap(), 0);
    }
    assert_eq!(params, before);
    assert!(opt.m.iter().chain(&opt.v).all(|t| t.max_abs() == 0.0));
    assert_eq!(opt.step, 3);
}

#[test]
fn first_step_matches_closed_form() {
    let spec = sensory_ltc(3);
    let mut params = init_params(&spec, 2).unwrap();
    let before = params.clone();
    let cfg = AdamConfig::default();
    let mut opt = OptimizerState::new(&params, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grads: Vec<Tensor> = params
        .tables()
        .iter()
        .map(|t| random_tensor(&mut rng, t.value.rows(), t.value.cols(), 1.0))
        .collect();
    opt.step(&mut params, &grads).unwrap();
    for ((new, old), g) in params.tables().iter().zip(before.tables()).zip(&grads) {
        for k in 0..g.len() {
            let (p0, gk) = (old.value.data()[k], g.data()[k]);
            // m̂ = g and v̂ = g², so the step is lr·g/(|g| + ε).
            let mut want = if old.trainable {
                p0 - cfg.lr * gk / (gk.abs() + cfg.eps)
            } else {
                p0
            };
            if old.nonneg {
                want = want.max(0.0);
            }
            assert!(
                (new.value.data()[k] - want).abs() < 1e-15,
                "{} entry {k}",
                new.name
            );
        }
    }
}

#[test]
fn capacitance_is_never_updated() {
    let spec = sensory_ltc(4);
    let mut params = init_params(&spec, 5).unwrap();
    let c0 = params.get(ParamName::Capacitance).unwrap().clone();
    let mut opt = OptimizerState::new(
        &params,
        AdamConfig {
            lr: 0.05,
            ..Default::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let grads: Vec<Tensor> = params
            .tables()
            .iter()
            .map(|t| random_tensor(&mut rng, t.value.rows(), t.value.cols(), 10.0))
            .collect();
        opt.step(&mut params, &grads).unwrap();
    }
    assert_eq!(params.get(ParamName::Capacitance).unwrap(), &c0);
}

#[test]
fn nan_gradient_names_its_table_and_changes_nothing() {
    let spec = sensory_ltc(2);
    let mut params = init_params(&spec, 7).unwrap();
    let before = params.clone();
    let mut opt = OptimizerState::new(&params, AdamConfig::default());
    let mut grads: Vec<Tensor> = params
        .tables()
        .iter()
        .map(|t| Tensor::filled(t.value.rows(), t.value.cols(), 0.1))
        .collect();
    let k = params
        .tables()
        .iter()
        .position(|t| t.name == ParamName::InB)
        .unwrap();
    grads[k].data_mut()[0] = f64::NAN;
    let err = opt.step(&mut params, &grads).unwrap_err();
    assert!(matches!(err, TrainError::NonFiniteGradient(ParamName::InB)));
    assert!(err.to_string().contains("in_b"));
    assert_eq!(params, before);
    assert_eq!(opt.step, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_holds_after_every_step(seed: u64, lr in 1e-3f64..1.0) {
        let spec = ModelSpec::ltc(3, 2, InputMode::Synaptic);
        let mut params = init_params(&spec, seed).unwrap();
        let mut opt = OptimizerState::new(&params, AdamConfig { lr, ..Default::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let grads: Vec<Tensor> = params
                .tables()
                .iter()
                .map(|t| random_tensor(&mut rng, t.value.rows(), t.value.cols(), 5.0))
                .collect();
            opt.step(&mut params, &grads).unwrap();
            for name in [ParamName::Capacitance, ParamName::W, ParamName::A, ParamName::InW, ParamName::InA] {
                prop_assert!(params.get(name).unwrap().data().iter().all(|&v| v >= 0.0), "{name}");
            }
        }
    }

    #[test]
    fn losses_match_compensated_oracles(seed: u64, rows in 1usize..40, cols in 1usize..12, scale in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = random_tensor(&mut rng, rows, cols, scale);
        let target = random_tensor(&mut rng, rows, cols, scale);
        let oracle = neumaier(pred.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t))) / (rows * cols) as f64;
        prop_assert!((mse_loss(&pred, &target).unwrap() - oracle).abs() <= 1e-10 * oracle.max(1.0));

        let logits = random_tensor(&mut rng, rows, 10, scale);
        let labels: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..10)).collect();
        let per_row = (0..rows).map(|r| {
            let z = logits.row_slice(r);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            // log Σ exp(z) − z_label, with the sum taken in compensated form.
            neumaier(z.iter().map(|v| (v - max).exp())).ln() + max - z[labels[r]]
        });
        let oracle = neumaier(per_row) / rows as f64;
        prop_assert!((cross_entropy_batch(&logits, &labels).unwrap() - oracle).abs() <= 1e-10 * oracle.max(1.0));
    }
}

#[test]
fn zero_epochs_reports_the_initialization() {
    let spec = sensory_ltc(2);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let teacher = leaky_teacher(&ModelSpec::ltc(1, 1, InputMode::Synaptic), 0);
    let data = |rng: &mut ChaCha8Rng| {
        teacher_set(
            &ModelSpec::ltc(1, 1, InputMode::Synaptic),
            &teacher,
            8,
            5,
            rng,
        )
    };
    let splits = splits_of(data(&mut rng), data(&mut rng), data(&mut rng));
    let cfg = TrainConfig {
        epochs: 0,
        seed: 4,
        ..Default::default()
    };
    let out = train(&spec, &splits, &cfg, None, None).unwrap();
    let init = init_params(&spec, 4).unwrap();
    assert!(out.report.epochs.is_empty());
    assert_eq!(out.report.best_epoch, 0);
    assert_eq!(
        out.report.initial,
        evaluate(&spec, &init, &splits.val).unwrap()
    );
    assert_eq!(out.report.best_val_loss, out.report.initial.loss);
    assert_eq!(
        out.report.test,
        Some(evaluate(&spec, &init, &splits.test).unwrap())
    );
    assert_eq!(out.checkpoint.params, init);
}

#[test]
fn single_neuron_learns_a_leaky_integrator() {
    let spec = ModelSpec::ltc(1, 1, InputMode::Synaptic);
    let teacher = leaky_teacher(&spec, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let splits = splits_of(
        teacher_set(&spec, &teacher, 64, 10, &mut rng),
        teacher_set(&spec, &teacher, 32, 10, &mut rng),
        teacher_set(&spec, &teacher, 32, 10, &mut rng),
    );
    // The generating parameters are an exact solution.
    assert!(evaluate(&spec, &teacher, &splits.val).unwrap().loss < 1e-28);

    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 16,
        seed: 1,
        adam: AdamConfig {
            lr: 0.02,
            ..Default::default()
        },
    };
    let out = train(&spec, &splits, &cfg, None, None).unwrap();
    let r = &out.report;
    assert!(
        r.best_val_loss < 1e-3,
        "initial {} best {} at {}",
        r.initial.loss,
        r.best_val_loss,
        r.best_epoch
    );
    assert!(r.test.unwrap().loss < 1e-3);
}

#[test]
fn training_is_deterministic_per_seed() {
    let spec = sensory_ltc(3);
    let teacher_spec = ModelSpec::ltc(1, 1, InputMode::Synaptic);
    let teacher = leaky_teacher(&teacher_spec, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let splits = splits_of(
        teacher_set(&teacher_spec, &teacher, 20, 6, &mut rng),
        teacher_set(&teacher_spec, &teacher, 6, 6, &mut rng),
        teacher_set(&teacher_spec, &teacher, 6, 6, &mut rng),
    );
    let cfg = TrainConfig {
        epochs: 4,
        batch_size: 8,
        seed: 3,
        ..Default::default()
    };
    let a = train(&spec, &splits, &cfg, None, None).unwrap();
    let b = train(&spec, &splits, &cfg, None, None).unwrap();
    assert_eq!(a.report.epochs, b.report.epochs);
    assert_eq!(a.checkpoint, b.checkpoint);
    let c = train(&spec, &splits, &TrainConfig { seed: 4, ..cfg }, None, None).unwrap();
    assert_ne!(a.report.epochs, c.report.epochs);
}

#[test]
fn small_steps_on_a_frozen_batch_do_not_increase_the_loss() {
    for spec in [sensory_ltc(4), ModelSpec::ctrnn(4, 1, InputMode::Linear)] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let inputs: Vec<Tensor> = (0..8)
            .map(|_| random_tensor(&mut rng, 16, 1, 1.0))
            .collect();
        let batch = Batch {
            inputs,
            targets: BatchTargets::Values(random_tensor(&mut rng, 16, 1, 0.5)),
        };
        let mut params = init_params(&spec, 12).unwrap();
        let mut opt = OptimizerState::new(
            &params,
            AdamConfig {
                lr: 1e-4,
                ..Default::default()
            },
        );
        let mut last = f64::INFINITY;
        for step in 0..5 {
            let (loss, grads) = loss_and_grad(&spec, &params, &batch).unwrap();
            assert!(
                loss <= last + 1e-9,
                "{:?} step {step}: {loss} after {last}",
                spec.family
            );
            last = loss;
            opt.step(&mut params, &grads).unwrap();
        }
    }
}

#[test]
fn unrolled_gradient_matches_finite_differences() {
    let specs = [
        sensory_ltc(2),
        ModelSpec::ctrnn(2, 1, InputMode::Linear),
        ModelSpec::ctrnn(2, 1, InputMode::Synaptic)
            .with_wiring(Wiring::NeuralActivation)
            .with_w_mode(WMode::R),
    ];
    for spec in specs {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let batch = Batch {
            inputs: (0..20)
                .map(|_| random_tensor(&mut rng, 3, 1, 1.0))
                .collect(),
            targets: BatchTargets::Values(random_tensor(&mut rng, 3, 1, 1.0)),
        };
        let params = init_params(&spec, 14).unwrap();
        let (_, grads) = loss_and_grad(&spec, &params, &batch).unwrap();
        let h = 1e-6;
        let (mut diff, mut norm) = (Vec::new(), Vec::new());
        for (k, table) in params.tables().iter().enumerate() {
            for e in 0..table.value.len() {
                let shifted = |delta: f64| {
                    let mut p = params.clone();
                    p.tables_mut()[k].value.data_mut()[e] += delta;
                    loss_and_grad(&spec, &p, &batch).unwrap().0
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                diff.push(grads[k].data()[e] - fd);
                norm.push(fd);
            }
        }
        let l2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rel = l2(&diff) / l2(&norm);
        assert!(
            rel < 1e-3,
            "{:?}: relative gradient error {rel:e}",
            spec.family
        );
    }
}

#[test]
fn checkpoint_report_and_curve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = sensory_ltc(2);
    let teacher_spec = ModelSpec::ltc(1, 1, InputMode::Synaptic);
    let teacher = leaky_teacher(&teacher_spec, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let splits = splits_of(
        teacher_set(&teacher_spec, &teacher, 8, 4, &mut rng),
        teacher_set(&teacher_spec, &teacher, 4, 4, &mut rng),
        teacher_set(&teacher_spec, &teacher, 4, 4, &mut rng),
    );
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 4,
        ..Default::default()
    };
    let scaler = Standardizer {
        mean: vec![0.5],
        std: vec![2.0],
    };
    let out = train(
        &spec,
        &splits,
        &cfg,
        Some("ltc".into()),
        Some(scaler.clone()),
    )
    .unwrap();

    let ckpt_path = dir.path().join("model.json");
    out.checkpoint.save(&ckpt_path).unwrap();
    let back = Checkpoint::load(&ckpt_path).unwrap();
    assert_eq!(back, out.checkpoint);
    assert_eq!(back.standardizer, Some(scaler));

    let report_path = dir.path().join("report.json");
    out.report.save_json(&report_path).unwrap();
    let text = std::fs::read_to_string(&report_path).unwrap();
    assert_eq!(
        serde_json::from_str::<ltcnet::train::TrainReport>(&text).unwrap(),
        out.report
    );

    let csv_path = dir.path().join("loss.csv");
    out.report.save_loss_csv(&csv_path).unwrap();
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,val_loss");
    assert_eq!(lines.len(), 4);
    let last: Vec<f64> = lines[3].split(',').map(|c| c.parse().unwrap()).collect();
    let rec = &out.report.epochs[2];
    assert_eq!(last, vec![3.0, rec.train_loss, rec.val_loss]);

    // A checkpoint whose tables no longer fit its spec is rejected.
    let mut bad = out.checkpoint.clone();
    bad.spec.n_neurons = 3;
    bad.save(&ckpt_path).unwrap();
    assert!(Checkpoint::load(&ckpt_path).is_err());
}

#[test]
fn divergence_reports_where_it_happened() {
    let spec = sensory_ltc(2);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let good = |rng: &mut ChaCha8Rng| {
        whole_sequences(
            vec![random_tensor(rng, 4, 1, 1.0); 4],
            Targets::Values(Tensor::zeros(4, 1)),
        )
    };
    let mut train_set = good(&mut rng);
    train_set.targets = Targets::Values(Tensor::filled(4, 1, f64::INFINITY));
    let splits = splits_of(train_set, good(&mut rng), good(&mut rng));
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 2,
        ..Default::default()
    };
    match train(&spec, &splits, &cfg, None, None) {
        Err(TrainError::Diverged {
            epoch,
            batch,
            report,
            ..
        }) => {
            assert_eq!((epoch, batch), (1, 0));
            assert!(report.epochs.is_empty());
            assert!(report.initial.loss.is_finite());
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn training_rejects_incompatible_data() {
    let spec = ModelSpec::ltc(2, 3, InputMode::Synaptic);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let set = whole_sequences(
        vec![random_tensor(&mut rng, 4, 1, 1.0); 2],
        Targets::Values(Tensor::zeros(2, 1)),
    );
    let splits = splits_of(set.clone(), set.clone(), set);
    assert!(matches!(
        train(&spec, &splits, &TrainConfig::default(), None, None),
        Err(TrainError::Invalid(_))
    ));
}
