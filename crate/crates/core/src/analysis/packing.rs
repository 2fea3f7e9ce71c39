//! How many neural-activation neurons it takes to hold as many parameters
//! as a synaptic-activation network of a given size.

use serde::{Deserialize, Serialize};

use crate::model::{count_params, Family, InputMode, ModelSpec, WMode, Wiring};

/// One synaptic-activation model and the neural-activation family it is
/// measured against. Networks with inputs use `m = n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    /// SA-ACT-RNN against NA-ACT-RNN.
    ActRnn,
    /// Autonomous SA-LTC against NA-ACT-RNN.
    AutonomousLtc,
    /// SA-CT-RNN with sensory synapses against NA-CT-RNN with sensory synapses.
    CtRnnSynaptic,
    /// SA-LTC with sensory synapses against NA-CT-RNN with sensory synapses.
    LtcSynaptic,
    /// SA-LTC with a linear input map against NA-CT-RNN with a linear input map.
    LtcLinear,
}

/// A neuron-count match quoted in the literature for `n = 32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotedMatch {
    pub sa_count: usize,
    pub na_neurons: usize,
    pub na_count: usize,
}

fn act_rnn(n: usize, wiring: Wiring, w_mode: WMode) -> ModelSpec {
    ModelSpec {
        family: Family::ActRnn,
        ..ModelSpec::ctrnn(n, 0, InputMode::None)
            .with_wiring(wiring)
            .with_w_mode(w_mode)
    }
}

impl Comparison {
    pub const ALL: [Comparison; 5] = [
        Comparison::ActRnn,
        Comparison::AutonomousLtc,
        Comparison::CtRnnSynaptic,
        Comparison::LtcSynaptic,
        Comparison::LtcLinear,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Comparison::ActRnn => "SA-ACT-RNN vs NA-ACT-RNN",
            Comparison::AutonomousLtc => "SA-LTC (autonomous) vs NA-ACT-RNN",
            Comparison::CtRnnSynaptic => "SA-CT-RNN (synaptic input) vs NA-CT-RNN (synaptic input)",
            Comparison::LtcSynaptic => "SA-LTC (synaptic input) vs NA-CT-RNN (synaptic input)",
            Comparison::LtcLinear => "SA-LTC (linear input) vs NA-CT-RNN (linear input)",
        }
    }

    pub fn sa_spec(self, n: usize) -> ModelSpec {
        match self {
            Comparison::ActRnn => act_rnn(n, Wiring::SynapticActivation, WMode::V),
            Comparison::AutonomousLtc => ModelSpec::ltc(n, 0, InputMode::None),
            Comparison::CtRnnSynaptic => ModelSpec::ctrnn(n, n, InputMode::Synaptic),
            Comparison::LtcSynaptic => ModelSpec::ltc(n, n, InputMode::Synaptic),
            Comparison::LtcLinear => ModelSpec::ltc(n, n, InputMode::Linear),
        }
    }

    /// The neural-activation ACT-RNN carries no slope table, as in its
    /// `w·σ(x + b)` form; the CT-RNNs keep the default synapse.
    pub fn na_spec(self, n: usize) -> ModelSpec {
        match self {
            Comparison::ActRnn | Comparison::AutonomousLtc => {
                act_rnn(n, Wiring::NeuralActivation, WMode::R)
            }
            Comparison::CtRnnSynaptic | Comparison::LtcSynaptic => {
                ModelSpec::ctrnn(n, n, InputMode::Synaptic).with_wiring(Wiring::NeuralActivation)
            }
            Comparison::LtcLinear => {
                ModelSpec::ctrnn(n, n, InputMode::Linear).with_wiring(Wiring::NeuralActivation)
            }
        }
    }

    pub fn quoted(self) -> QuotedMatch {
        let (sa_count, na_neurons, na_count) = match self {
            Comparison::ActRnn => (3104, 54, 3132),
            Comparison::AutonomousLtc => (4192, 64, 4224),
            Comparison::CtRnnSynaptic => (6176, 54, 6102),
            Comparison::LtcSynaptic => (8288, 63, 8253),
            Comparison::LtcLinear => (5216, 51, 5355),
        };
        QuotedMatch {
            sa_count,
            na_neurons,
            na_count,
        }
    }

    pub fn sa_count(self, n: usize) -> usize {
        count_params(&self.sa_spec(n)).expect("comparison specs are valid")
    }

    pub fn na_count(self, n: usize) -> usize {
        count_params(&self.na_spec(n)).expect("comparison specs are valid")
    }

    /// Smallest NA size whose count reaches `target`.
    pub fn smallest_at_least(self, target: usize) -> usize {
        (1..)
            .find(|&k| self.na_count(k) >= target)
            .expect("counts grow without bound")
    }

    /// NA size whose count is closest to `target`; ties go to the smaller.
    pub fn nearest(self, target: usize) -> usize {
        let above = self.smallest_at_least(target);
        if above > 1 && target - self.na_count(above - 1) <= self.na_count(above) - target {
            above - 1
        } else {
            above
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingRow {
    pub comparison: Comparison,
    pub neurons: usize,
    pub sa_count: usize,
    /// Smallest NA size with at least as many parameters.
    pub na_at_least: usize,
    pub na_at_least_count: usize,
    pub na_nearest: usize,
    pub na_nearest_count: usize,
    pub quoted: Option<QuotedMatch>,
    /// Our count for the quoted NA size.
    pub quoted_size_count: Option<usize>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingReport {
    pub rows: Vec<PackingRow>,
}

const QUOTED_AT: usize = 32;

pub fn packing_report(neurons: &[usize], comparisons: &[Comparison]) -> PackingReport {
    let mut rows = Vec::new();
    for &c in comparisons {
        for &n in neurons.iter().filter(|&&n| n > 0) {
            let sa_count = c.sa_count(n);
            let na_at_least = c.smallest_at_least(sa_count);
            let na_nearest = c.nearest(sa_count);
            let quoted = (n == QUOTED_AT).then(|| c.quoted());
            let quoted_size_count = quoted.map(|q| c.na_count(q.na_neurons));
            let mut flags = Vec::new();
            if let (Some(q), Some(ours)) = (quoted, quoted_size_count) {
                if q.sa_count != sa_count {
                    flags.push(format!(
                        "quoted SA count {} differs from {sa_count}",
                        q.sa_count
                    ));
                }
                if q.na_count != ours {
                    flags.push(format!(
                        "quoted {} for n={} differs from {ours}",
                        q.na_count, q.na_neurons
                    ));
                }
                if q.na_neurons != na_at_least {
                    flags.push(format!(
                        "quoted size {} is not the smallest covering size",
                        q.na_neurons
                    ));
                }
                if q.na_neurons != na_nearest {
                    flags.push(format!(
                        "quoted size {} is not the nearest size",
                        q.na_neurons
                    ));
                }
            }
            rows.push(PackingRow {
                comparison: c,
                neurons: n,
                sa_count,
                na_at_least,
                na_at_least_count: c.na_count(na_at_least),
                na_nearest,
                na_nearest_count: c.na_count(na_nearest),
                quoted,
                quoted_size_count,
                flags,
            });
        }
    }
    PackingReport { rows }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

impl PackingReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| comparison | n | SA params | NA n (≥) | NA params | NA n (nearest) | NA params | quoted NA n | quoted | ours | flags |\n\
             |---|---|---|---|---|---|---|---|---|---|---|\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
                r.comparison.label(),
                r.neurons,
                r.sa_count,
                r.na_at_least,
                r.na_at_least_count,
                r.na_nearest,
                r.na_nearest_count,
                opt(r.quoted.map(|q| q.na_neurons)),
                opt(r.quoted.map(|q| q.na_count)),
                opt(r.quoted_size_count),
                r.flags.join("; "),
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = [
            "comparison",
            "neurons",
            "sa_count",
            "na_at_least",
            "na_at_least_count",
            "na_nearest",
            "na_nearest_count",
            "quoted_na_neurons",
            "quoted_na_count",
            "quoted_size_count",
            "flags",
        ];
        w.write_record(header).expect("in-memory write");
        for r in &self.rows {
            let comparison = serde_json::to_value(r.comparison).expect("unit variant");
            w.write_record([
                comparison.as_str().unwrap_or_default().to_string(),
                r.neurons.to_string(),
                r.sa_count.to_string(),
                r.na_at_least.to_string(),
                r.na_at_least_count.to_string(),
                r.na_nearest.to_string(),
                r.na_nearest_count.to_string(),
                opt(r.quoted.map(|q| q.na_neurons)),
                opt(r.quoted.map(|q| q.na_count)),
                opt(r.quoted_size_count),
                r.flags.join("; "),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}
