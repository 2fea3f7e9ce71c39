//! Compact type strings of the form
//! `ctrnn_[w-mode]act[factor][rec-type]_in-mode[_lis]`.
//!
//! | part     | tokens                          |
//! |----------|---------------------------------|
//! | w-mode   | none (plain), `r`, `v`          |
//! | act      | `sigm`, `tanh`                  |
//! | factor   | none, `*` (1 − x), `+` (e − x)  |
//! | rec-type | none (neural), `s` (synaptic)   |
//! | in-mode  | `linear`, `synaptic`            |
//! | lis      | optional `_lis` suffix          |
//!
//! The `+` factor selects an LTC; the other factors give a CT-RNN.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{Activation, Family, Gate, InputMode, ModelError, ModelSpec, WMode, Wiring};
use crate::solver::SolverConfig;

const PREFIX: &str = "ctrnn_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Factor {
    None,
    Star,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Descriptor {
    pub w_mode: WMode,
    pub activation: Activation,
    pub factor: Factor,
    pub wiring: Wiring,
    pub input_mode: InputMode,
    pub learnable_rest: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} at byte {}..{} of {input:?}", span.start, span.end)]
pub struct DescriptorError {
    pub input: String,
    pub span: Range<usize>,
    pub message: String,
}

impl DescriptorError {
    /// The input followed by a caret line under the offending span.
    pub fn pointer(&self) -> String {
        let lead = self
            .input
            .get(..self.span.start)
            .map_or(0, |s| s.chars().count());
        let width = self
            .input
            .get(self.span.clone())
            .map_or(1, |s| s.chars().count())
            .max(1);
        format!("{}\n{}{}", self.input, " ".repeat(lead), "^".repeat(width))
    }
}

struct Cursor<'a> {
    input: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.input[self.pos..]
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    /// Span of the next run of ASCII letters, or of the next character when
    /// it is not a letter.
    fn word_span(&self) -> Range<usize> {
        let rest = self.rest();
        let letters = rest.bytes().take_while(u8::is_ascii_alphabetic).count();
        let len = if letters > 0 {
            letters
        } else {
            rest.chars().next().map_or(0, char::len_utf8)
        };
        self.pos..self.pos + len
    }

    fn error(&self, span: Range<usize>, message: impl Into<String>) -> DescriptorError {
        DescriptorError {
            input: self.input.to_string(),
            span,
            message: message.into(),
        }
    }

    fn expect(&mut self, token: &str, what: &str) -> Result<(), DescriptorError> {
        if self.eat(token) {
            return Ok(());
        }
        let span = self.word_span();
        let found = &self.input[span.clone()];
        let found = if found.is_empty() {
            "end of input".to_string()
        } else {
            format!("{found:?}")
        };
        Err(self.error(span, format!("expected {what}, found {found}")))
    }
}

impl Descriptor {
    pub fn parse(s: &str) -> Result<Descriptor, DescriptorError> {
        let mut cur = Cursor { input: s, pos: 0 };
        if !cur.eat(PREFIX) {
            let matched = s
                .bytes()
                .zip(PREFIX.bytes())
                .take_while(|(a, b)| a == b)
                .count();
            let end = s[matched..]
                .chars()
                .next()
                .map_or(matched, |c| matched + c.len_utf8());
            return Err(cur.error(matched..end, format!("expected prefix {PREFIX:?}")));
        }

        let w_mode = if cur.eat("r") {
            WMode::R
        } else if cur.eat("v") {
            WMode::V
        } else {
            WMode::Plain
        };

        let activation = if cur.eat("sigm") {
            Activation::Sigmoid
        } else if cur.eat("tanh") {
            Activation::Tanh
        } else {
            let span = cur.word_span();
            let msg = if w_mode == WMode::Plain {
                "unknown w-mode or activation (expected r, v, sigm or tanh)"
            } else {
                "unknown activation (expected sigm or tanh)"
            };
            return Err(cur.error(span, msg));
        };

        let factor = if cur.eat("*") {
            Factor::Star
        } else if cur.eat("+") {
            Factor::Plus
        } else {
            Factor::None
        };

        let wiring = if cur.eat("s") {
            Wiring::SynapticActivation
        } else {
            Wiring::NeuralActivation
        };

        cur.expect("_", "'_' before the input mode")?;

        let input_mode = if cur.eat("linear") {
            InputMode::Linear
        } else if cur.eat("synaptic") {
            InputMode::Synaptic
        } else {
            let span = cur.word_span();
            return Err(cur.error(span, "unknown input mode (expected linear or synaptic)"));
        };

        let learnable_rest = cur.eat("_lis");
        if !cur.rest().is_empty() {
            let span = cur.pos..s.len();
            return Err(cur.error(span, "unexpected trailing characters"));
        }

        Ok(Descriptor {
            w_mode,
            activation,
            factor,
            wiring,
            input_mode,
            learnable_rest,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::from(PREFIX);
        out.push_str(match self.w_mode {
            WMode::Plain => "",
            WMode::R => "r",
            WMode::V => "v",
        });
        out.push_str(match self.activation {
            Activation::Sigmoid => "sigm",
            Activation::Tanh => "tanh",
        });
        out.push_str(match self.factor {
            Factor::None => "",
            Factor::Star => "*",
            Factor::Plus => "+",
        });
        if self.wiring == Wiring::SynapticActivation {
            out.push('s');
        }
        out.push('_');
        out.push_str(match self.input_mode {
            InputMode::Linear => "linear",
            InputMode::Synaptic => "synaptic",
            InputMode::None => unreachable!("descriptors always carry an input mode"),
        });
        if self.learnable_rest {
            out.push_str("_lis");
        }
        out
    }

    /// Every string the grammar generates, in a fixed order.
    pub fn enumerate() -> Vec<Descriptor> {
        let mut out = Vec::new();
        for w_mode in [WMode::Plain, WMode::R, WMode::V] {
            for activation in [Activation::Sigmoid, Activation::Tanh] {
                for factor in [Factor::None, Factor::Star, Factor::Plus] {
                    for wiring in [Wiring::NeuralActivation, Wiring::SynapticActivation] {
                        for input_mode in [InputMode::Linear, InputMode::Synaptic] {
                            for learnable_rest in [false, true] {
                                out.push(Descriptor {
                                    w_mode,
                                    activation,
                                    factor,
                                    wiring,
                                    input_mode,
                                    learnable_rest,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// A validated spec with one output; adjust with [`ModelSpec::with_outputs`].
    pub fn to_model_spec(
        &self,
        n_neurons: usize,
        n_inputs: usize,
        solver: SolverConfig,
    ) -> Result<ModelSpec, ModelError> {
        let (family, gate) = match self.factor {
            Factor::None => (Family::CtRnn, Gate::None),
            Factor::Star => (Family::CtRnn, Gate::OneMinus),
            Factor::Plus => (Family::Ltc, Gate::Reversal),
        };
        let spec = ModelSpec {
            family,
            activation: self.activation,
            wiring: self.wiring,
            input_mode: self.input_mode,
            w_mode: self.w_mode,
            gate,
            learnable_rest: self.learnable_rest,
            n_neurons,
            n_inputs,
            n_outputs: 1,
            n_augment: 0,
            solver,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl FromStr for Descriptor {
    type Err = DescriptorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Descriptor::parse(s)
    }
}

impl TryFrom<String> for Descriptor {
    type Error = DescriptorError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Descriptor::parse(&s)
    }
}

impl From<Descriptor> for String {
    fn from(d: Descriptor) -> String {
        d.render()
    }
}
