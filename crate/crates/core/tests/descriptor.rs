use std::collections::HashSet;

use ltcnet::descriptor::Factor;
use ltcnet::model::{
    count_params, derivative, init_params, Activation, Family, Gate, InputMode, ParamName, WMode,
    Wiring,
};
use ltcnet::{Descriptor, SolverConfig};
use proptest::prelude::*;

/// The grammar's language, built by concatenating token tables with the
/// fields each token stands for.
fn language() -> Vec<(String, Descriptor)> {
    let mut out = Vec::new();
    for (wt, w_mode) in [("", WMode::Plain), ("r", WMode::R), ("v", WMode::V)] {
        for (at, activation) in [("sigm", Activation::Sigmoid), ("tanh", Activation::Tanh)] {
            for (ft, factor) in [("", Factor::None), ("*", Factor::Star), ("+", Factor::Plus)] {
                for (rt, wiring) in [
                    ("", Wiring::NeuralActivation),
                    ("s", Wiring::SynapticActivation),
                ] {
                    for (it, input_mode) in [
                        ("linear", InputMode::Linear),
                        ("synaptic", InputMode::Synaptic),
                    ] {
                        for (lt, learnable_rest) in [("", false), ("_lis", true)] {
                            let text = format!("ctrnn_{wt}{at}{ft}{rt}_{it}{lt}");
                            let d = Descriptor {
                                w_mode,
                                activation,
                                factor,
                                wiring,
                                input_mode,
                                learnable_rest,
                            };
                            out.push((text, d));
                        }
                    }
                }
            }
        }
    }
    out
}

#[test]
fn every_generated_string_parses_and_round_trips() {
    let lang = language();
    assert_eq!(lang.len(), 144);
    let texts: HashSet<&str> = lang.iter().map(|(t, _)| t.as_str()).collect();
    assert_eq!(texts.len(), 144);
    for (text, want) in &lang {
        let d = Descriptor::parse(text).unwrap();
        assert_eq!(&d, want, "{text}");
        assert_eq!(&d.render(), text);
    }
    let enumerated: Vec<Descriptor> = Descriptor::enumerate();
    assert_eq!(enumerated.len(), 144);
    assert!(enumerated
        .iter()
        .all(|d| Descriptor::parse(&d.render()).unwrap() == *d));
}

#[test]
fn sa_ltc_string_maps_to_documented_spec() {
    let d: Descriptor = "ctrnn_vsigm+s_synaptic".parse().unwrap();
    let spec = d.to_model_spec(32, 32, SolverConfig::default()).unwrap();
    assert_eq!(spec.family, Family::Ltc);
    assert_eq!(spec.gate, Gate::Reversal);
    assert_eq!(spec.wiring, Wiring::SynapticActivation);
    assert_eq!(count_params(&spec).unwrap(), 8288);
}

#[test]
fn vanilla_string_is_tanh_ct_rnn_with_linear_input() {
    let spec = Descriptor::parse("ctrnn_vtanh_linear")
        .unwrap()
        .to_model_spec(8, 3, SolverConfig::default())
        .unwrap();
    assert_eq!(spec.family, Family::CtRnn);
    assert_eq!(spec.activation, Activation::Tanh);
    assert_eq!(spec.wiring, Wiring::NeuralActivation);
    assert_eq!(spec.input_mode, InputMode::Linear);
    assert_eq!(spec.gate, Gate::None);
}

#[test]
fn only_tanh_with_reversal_is_inconsistent() {
    let bad: Vec<String> = Descriptor::enumerate()
        .into_iter()
        .filter(|d| d.to_model_spec(4, 2, SolverConfig::default()).is_err())
        .map(|d| d.render())
        .collect();
    assert_eq!(bad.len(), 3 * 2 * 2 * 2, "{bad:?}");
    assert!(bad.iter().all(|s| s.contains("tanh+")));
}

#[test]
fn star_factor_current_vanishes_at_one() {
    let spec = Descriptor::parse("ctrnn_vsigm*s_synaptic")
        .unwrap()
        .to_model_spec(3, 2, SolverConfig::default())
        .unwrap();
    assert_eq!(spec.gate, Gate::OneMinus);
    let mut params = init_params(&spec, 7).unwrap();
    params.fill(ParamName::Leak, 0.0).unwrap();
    let d = derivative(&spec, &params, &[1.0; 3], Some(&[0.4, -2.0])).unwrap();
    assert_eq!(d, vec![0.0; 3]);
}

#[test]
fn error_message_names_the_span() {
    let err = Descriptor::parse("ctrnn_vsigm_quadratic").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("12..21"), "{msg}");
    assert!(msg.contains("input mode"), "{msg}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn strings_outside_the_language_are_rejected_with_a_valid_span(
        s in "(ctrnn_)?[rvx]?(sigm|tanh|sig|relu)?[*+-]?s?_?(linear|synaptic|lin)?(_lis|_li|x)?"
    ) {
        let valid: HashSet<String> = language().into_iter().map(|(t, _)| t).collect();
        match Descriptor::parse(&s) {
            Ok(d) => {
                prop_assert!(valid.contains(&s), "accepted {s:?}");
                prop_assert_eq!(d.render(), s);
            }
            Err(e) => {
                prop_assert!(!valid.contains(&s), "rejected {s:?}");
                prop_assert!(e.span.start <= e.span.end && e.span.end <= s.len());
            }
        }
    }

    #[test]
    fn parse_inverts_render(idx in 0usize..144) {
        let d = Descriptor::enumerate()[idx];
        prop_assert_eq!(Descriptor::parse(&d.to_string()).unwrap(), d);
    }
}
