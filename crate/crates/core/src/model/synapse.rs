//! Fused synapse layer: `out[r, i] = Σ_j g_ji(pre[r, j]) · gate(post[r, i])`.
//!
//! Inputs, in order: `pre` (`B × p`), `post` (`B × N`), `w` (`p × N`),
//! `b`, then `a` unless the mode is `r`, then `e` for the reversal gate.
//! With synaptic activation `a`, `b` and `e` are `p × N`. With neural
//! activation `a` and `b` are `1 × p` and `e` is `1 × N`.
//!
//! The forward pass keeps the `B·p·N` activations for the backward pass;
//! every other per-synapse term is recomputed.

use std::sync::OnceLock;

use super::spec::{Activation, Gate, WMode};
use crate::tape::CustomOp;
use crate::tensor::{sigmoid, ShapeError, Tensor};

#[derive(Debug)]
pub(crate) struct SynapseKernel {
    w_mode: WMode,
    activation: Activation,
    gate: Gate,
    /// Neural activation: one slope and bias per presynaptic neuron and one
    /// reversal potential per postsynaptic neuron.
    shared: bool,
    activations: OnceLock<Vec<f64>>,
}

struct Slots<'a> {
    pre: &'a Tensor,
    post: &'a Tensor,
    w: &'a [f64],
    b: &'a [f64],
    a: &'a [f64],
    e: &'a [f64],
}

/// Row `j` of a per-synapse table, or `j`'s shared value repeated.
fn row_of<'a>(
    table: &'a [f64],
    shared: bool,
    j: usize,
    n: usize,
    scratch: &'a mut [f64],
) -> &'a [f64] {
    if shared {
        scratch.fill(table[j]);
        scratch
    } else {
        &table[j * n..(j + 1) * n]
    }
}

impl SynapseKernel {
    pub fn new(w_mode: WMode, activation: Activation, gate: Gate, shared: bool) -> Self {
        SynapseKernel {
            w_mode,
            activation,
            gate,
            shared,
            activations: OnceLock::new(),
        }
    }

    fn has_slope(&self) -> bool {
        self.w_mode != WMode::R
    }

    fn has_reversal(&self) -> bool {
        self.gate == Gate::Reversal
    }

    fn arity(&self) -> usize {
        4 + self.has_slope() as usize + self.has_reversal() as usize
    }

    fn slots<'a>(&self, inputs: &[&'a Tensor]) -> Result<Slots<'a>, ShapeError> {
        let invalid = |detail: String| ShapeError::Invalid {
            op: "synapse",
            detail,
        };
        if inputs.len() != self.arity() {
            return Err(invalid(format!(
                "expected {} inputs, got {}",
                self.arity(),
                inputs.len()
            )));
        }
        let (pre, post, w, b) = (inputs[0], inputs[1], inputs[2], inputs[3]);
        let (rows, p) = pre.shape();
        let n = post.cols();
        if post.rows() != rows {
            return Err(ShapeError::Mismatch {
                op: "synapse",
                lhs: pre.shape(),
                rhs: post.shape(),
            });
        }
        let check = |t: &Tensor, want: (usize, usize), what: &str| {
            if t.shape() == want {
                Ok(())
            } else {
                Err(invalid(format!(
                    "{what} has shape {:?}, expected {want:?}",
                    t.shape()
                )))
            }
        };
        check(w, (p, n), "w")?;
        let act_shape = if self.shared { (1, p) } else { (p, n) };
        check(b, act_shape, "b")?;
        let mut next = 4;
        let a = if self.has_slope() {
            check(inputs[next], act_shape, "a")?;
            next += 1;
            inputs[next - 1].data()
        } else {
            &[]
        };
        let e = if self.has_reversal() {
            check(inputs[next], if self.shared { (1, n) } else { (p, n) }, "e")?;
            inputs[next].data()
        } else {
            &[]
        };
        Ok(Slots {
            pre,
            post,
            w: w.data(),
            b: b.data(),
            a,
            e,
        })
    }

    /// Writes the driving factor `gate(post_i)` for row `r`, presynaptic `j`.
    fn gate_row(&self, s: &Slots, y: &[f64], j: usize, out: &mut [f64]) {
        let n = y.len();
        match self.gate {
            Gate::None => out.fill(1.0),
            Gate::OneMinus => out.iter_mut().zip(y).for_each(|(o, y)| *o = 1.0 - y),
            Gate::Reversal => {
                let e = if self.shared {
                    s.e
                } else {
                    &s.e[j * n..(j + 1) * n]
                };
                out.iter_mut()
                    .zip(e)
                    .zip(y)
                    .for_each(|((o, e), y)| *o = e - y);
            }
        }
    }
}

impl CustomOp for SynapseKernel {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor, ShapeError> {
        let s = self.slots(inputs)?;
        let (rows, p) = s.pre.shape();
        let n = s.post.cols();
        let mut out = Tensor::zeros(rows, n);
        let mut acts = vec![0.0; rows * p * n];
        let (mut sa, mut sb) = (vec![0.0; n], vec![0.0; n]);
        let mut gate = vec![0.0; n];
        for r in 0..rows {
            let (x, y) = (s.pre.row_slice(r), s.post.row_slice(r));
            let acc = &mut out.data_mut()[r * n..(r + 1) * n];
            for (j, &xj) in x.iter().enumerate() {
                let w = &s.w[j * n..(j + 1) * n];
                let b = row_of(s.b, self.shared, j, n, &mut sb);
                let act = &mut acts[(r * p + j) * n..(r * p + j + 1) * n];
                match self.w_mode {
                    WMode::Plain => act
                        .iter_mut()
                        .zip(w)
                        .zip(b)
                        .for_each(|((z, w), b)| *z = w * xj + b),
                    WMode::R => act.iter_mut().zip(b).for_each(|(z, b)| *z = xj + b),
                    WMode::V => {
                        let a = row_of(s.a, self.shared, j, n, &mut sa);
                        act.iter_mut()
                            .zip(a)
                            .zip(b)
                            .for_each(|((z, a), b)| *z = a * (xj + b));
                    }
                }
                match self.activation {
                    Activation::Sigmoid => act.iter_mut().for_each(|z| *z = sigmoid(*z)),
                    Activation::Tanh => act.iter_mut().for_each(|z| *z = z.tanh()),
                }
                let scale = if self.w_mode == WMode::Plain {
                    row_of(s.a, self.shared, j, n, &mut sa)
                } else {
                    w
                };
                self.gate_row(&s, y, j, &mut gate);
                for (((o, v), c), g) in acc.iter_mut().zip(act.iter()).zip(scale).zip(&gate) {
                    *o += c * v * g;
                }
            }
        }
        // A kernel instance is recorded once, so the slot is empty here.
        let _ = self.activations.set(acts);
        Ok(out)
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &Tensor) -> Vec<Tensor> {
        let s = self.slots(inputs).expect("shapes checked in forward");
        let acts = self.activations.get().expect("forward ran before backward");
        let (rows, p) = s.pre.shape();
        let n = s.post.cols();
        let mut g_pre = vec![0.0; rows * p];
        let mut g_post = vec![0.0; rows * n];
        let mut g_w = vec![0.0; s.w.len()];
        let mut g_b = vec![0.0; s.b.len()];
        let mut g_a = vec![0.0; s.a.len()];
        let mut g_e = vec![0.0; s.e.len()];
        let (mut sa, mut sb) = (vec![0.0; n], vec![0.0; n]);
        let mut gate = vec![0.0; n];
        // Per-row partials of the output w.r.t. conductance, pre-activation,
        // slope and bias.
        let (mut d_cond, mut dz) = (vec![0.0; n], vec![0.0; n]);
        let (mut da, mut db) = (vec![0.0; n], vec![0.0; n]);
        for r in 0..rows {
            let (x, y, gr) = (s.pre.row_slice(r), s.post.row_slice(r), g.row_slice(r));
            let gp = &mut g_post[r * n..(r + 1) * n];
            for (j, &xj) in x.iter().enumerate() {
                let w = &s.w[j * n..(j + 1) * n];
                let act = &acts[(r * p + j) * n..(r * p + j + 1) * n];
                let a = if self.has_slope() {
                    row_of(s.a, self.shared, j, n, &mut sa)
                } else {
                    &[][..]
                };
                let b = row_of(s.b, self.shared, j, n, &mut sb);
                let scale = if self.w_mode == WMode::Plain { a } else { w };
                self.gate_row(&s, y, j, &mut gate);

                match self.gate {
                    Gate::None => {}
                    Gate::OneMinus => {
                        for (((gp, g), c), v) in gp.iter_mut().zip(gr).zip(scale).zip(act) {
                            *gp -= g * c * v;
                        }
                    }
                    Gate::Reversal => {
                        let ge = if self.shared {
                            &mut g_e[..]
                        } else {
                            &mut g_e[j * n..(j + 1) * n]
                        };
                        for ((((gp, ge), g), c), v) in
                            gp.iter_mut().zip(ge).zip(gr).zip(scale).zip(act)
                        {
                            let d_gate = g * c * v;
                            *gp -= d_gate;
                            *ge += d_gate;
                        }
                    }
                }
                for ((((dc, z), g), k), (c, v)) in d_cond
                    .iter_mut()
                    .zip(dz.iter_mut())
                    .zip(gr)
                    .zip(&gate)
                    .zip(scale.iter().zip(act))
                {
                    let ds = match self.activation {
                        Activation::Sigmoid => v * (1.0 - v),
                        Activation::Tanh => 1.0 - v * v,
                    };
                    *dc = g * k;
                    *z = *dc * c * ds;
                }

                let gw = &mut g_w[j * n..(j + 1) * n];
                let d_pre: f64 = match self.w_mode {
                    WMode::Plain => {
                        for ((da, dc), v) in da.iter_mut().zip(&d_cond).zip(act) {
                            *da = dc * v;
                        }
                        db.copy_from_slice(&dz);
                        gw.iter_mut().zip(&dz).for_each(|(gw, z)| *gw += z * xj);
                        dz.iter().zip(w).map(|(z, w)| z * w).sum()
                    }
                    WMode::R => {
                        gw.iter_mut()
                            .zip(&d_cond)
                            .zip(act)
                            .for_each(|((gw, dc), v)| *gw += dc * v);
                        db.copy_from_slice(&dz);
                        dz.iter().sum()
                    }
                    WMode::V => {
                        gw.iter_mut()
                            .zip(&d_cond)
                            .zip(act)
                            .for_each(|((gw, dc), v)| *gw += dc * v);
                        for ((((da, db), z), a), b) in
                            da.iter_mut().zip(db.iter_mut()).zip(&dz).zip(a).zip(b)
                        {
                            *da = z * (xj + b);
                            *db = z * a;
                        }
                        dz.iter().zip(a).map(|(z, a)| z * a).sum()
                    }
                };
                g_pre[r * p + j] += d_pre;
                if self.shared {
                    g_b[j] += db.iter().sum::<f64>();
                    if self.has_slope() {
                        g_a[j] += da.iter().sum::<f64>();
                    }
                } else {
                    g_b[j * n..(j + 1) * n]
                        .iter_mut()
                        .zip(&db)
                        .for_each(|(g, d)| *g += d);
                    if self.has_slope() {
                        g_a[j * n..(j + 1) * n]
                            .iter_mut()
                            .zip(&da)
                            .for_each(|(g, d)| *g += d);
                    }
                }
            }
        }
        let shaped = |data: Vec<f64>, like: &Tensor| {
            Tensor::new(like.rows(), like.cols(), data).expect("same length")
        };
        let mut out = vec![
            shaped(g_pre, s.pre),
            shaped(g_post, s.post),
            shaped(g_w, inputs[2]),
            shaped(g_b, inputs[3]),
        ];
        let mut next = 4;
        if self.has_slope() {
            out.push(shaped(g_a, inputs[next]));
            next += 1;
        }
        if self.has_reversal() {
            out.push(shaped(g_e, inputs[next]));
        }
        out
    }
}
