//! Layers composed from tape primitives. Gradients come for free from the
//! primitives, so none of these carry hand-written backward code.

use alloc::vec::Vec;

use rand::Rng;

use super::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{shape_err, Result};

/// Fully connected map `x (1 × in) → 1 × out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Dense {
    /// Registers `{name}.weight` (`in × out`) and `{name}.bias` (`1 × out`),
    /// both uniform in `±1/√in`.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / libm::sqrt(fan_in as f64);
        let weight =
            store.insert_uniform(&alloc::format!("{name}.weight"), &[fan_in, fan_out], bound, rng)?;
        let bias = if bias {
            Some(store.insert_uniform(&alloc::format!("{name}.bias"), &[1, fan_out], bound, rng)?)
        } else {
            None
        };
        Ok(Self { weight, bias })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let y = tape.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = tape.param(store, b);
                tape.add(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Scaled dot-product self-attention with the input as query, key and
/// value: `softmax(X Xᵀ / √d) X` for `X` of shape `L × d`.
pub fn sdp_self_attention(tape: &mut Tape, x: Var) -> Result<Var> {
    let s = tape.shape(x);
    if s.len() != 2 {
        return Err(shape_err!("attention input must be L x d, got {s:?}"));
    }
    let d = s[1];
    let xt = tape.transpose(x)?;
    let scores = tape.matmul(x, xt)?;
    let scores = tape.scale(scores, 1.0 / libm::sqrt(d as f64));
    let weights = tape.softmax(scores, 1)?;
    tape.matmul(weights, x)
}

/// Weights of one LSTM direction, gate order input, forget, cell, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmDirection {
    /// `d_in × 4H`
    pub w_ih: ParamId,
    /// `H × 4H`
    pub w_hh: ParamId,
    /// `1 × 4H`
    pub bias: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmLayer {
    pub forward: LstmDirection,
    pub backward: Option<LstmDirection>,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmLayer {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        bidirectional: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut dir = |tag: &str, rng: &mut R| -> Result<LstmDirection> {
            let b_ih = 1.0 / libm::sqrt(input_dim as f64);
            let b_hh = 1.0 / libm::sqrt(hidden as f64);
            Ok(LstmDirection {
                w_ih: store.insert_uniform(
                    &alloc::format!("{name}.{tag}.w_ih"),
                    &[input_dim, 4 * hidden],
                    b_ih,
                    rng,
                )?,
                w_hh: store.insert_uniform(
                    &alloc::format!("{name}.{tag}.w_hh"),
                    &[hidden, 4 * hidden],
                    b_hh,
                    rng,
                )?,
                bias: store.insert_uniform(
                    &alloc::format!("{name}.{tag}.bias"),
                    &[1, 4 * hidden],
                    b_hh,
                    rng,
                )?,
            })
        };
        let forward = dir("fwd", rng)?;
        let backward = if bidirectional {
            Some(dir("bwd", rng)?)
        } else {
            None
        };
        Ok(Self {
            forward,
            backward,
            input_dim,
            hidden,
        })
    }

    pub fn output_dim(&self) -> usize {
        if self.backward.is_some() {
            2 * self.hidden
        } else {
            self.hidden
        }
    }
}

fn run_direction(
    tape: &mut Tape,
    store: &ParamStore,
    x: Var,
    dir: &LstmDirection,
    hidden: usize,
    reverse: bool,
) -> Result<Var> {
    let steps = tape.shape(x)[0];
    let w_ih = tape.param(store, dir.w_ih);
    let w_hh = tape.param(store, dir.w_hh);
    let bias = tape.param(store, dir.bias);
    let xw = tape.matmul(x, w_ih)?;
    let xw = tape.add(xw, bias)?;
    let mut h = tape.input(Tensor::zeros(&[1, hidden]));
    let mut c = tape.input(Tensor::zeros(&[1, hidden]));
    let mut outs: Vec<Var> = Vec::with_capacity(steps);
    for s in 0..steps {
        let t = if reverse { steps - 1 - s } else { s };
        let row = tape.slice(xw, 0, t, 1)?;
        let rec = tape.matmul(h, w_hh)?;
        let gates = tape.add(row, rec)?;
        let i = tape.slice(gates, 1, 0, hidden)?;
        let i = tape.sigmoid(i);
        let f = tape.slice(gates, 1, hidden, hidden)?;
        let f = tape.sigmoid(f);
        let g = tape.slice(gates, 1, 2 * hidden, hidden)?;
        let g = tape.tanh(g);
        let o = tape.slice(gates, 1, 3 * hidden, hidden)?;
        let o = tape.sigmoid(o);
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        c = tape.add(keep, write)?;
        let ct = tape.tanh(c);
        h = tape.mul(o, ct)?;
        outs.push(h);
    }
    if reverse {
        outs.reverse();
    }
    tape.concat(&outs, 0)
}

/// Runs an LSTM layer over `x` (`T × d_in`) from zero initial states.
///
/// Output is `T × H`, or `T × 2H` when bidirectional, where row `t` holds
/// the forward state at `t` followed by the backward state at `t`.
pub fn lstm_layer(tape: &mut Tape, store: &ParamStore, x: Var, layer: &LstmLayer) -> Result<Var> {
    let s = tape.shape(x);
    if s.len() != 2 || s[1] != layer.input_dim {
        return Err(shape_err!(
            "lstm input {s:?}, want T x {}",
            layer.input_dim
        ));
    }
    let fwd = run_direction(tape, store, x, &layer.forward, layer.hidden, false)?;
    match &layer.backward {
        Some(dir) => {
            let bwd = run_direction(tape, store, x, dir, layer.hidden, true)?;
            tape.concat(&[fwd, bwd], 1)
        }
        None => Ok(fwd),
    }
}

/// Squeeze-and-excitation weights for `C` channels with bottleneck `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SqueezeExcite {
    /// `C × B`
    pub reduce: ParamId,
    /// `B × C`
    pub expand: ParamId,
    pub channels: usize,
}

impl SqueezeExcite {
    pub fn bottleneck(channels: usize, reduction: usize) -> usize {
        (channels / reduction.max(1)).max(1)
    }

    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        reduction: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let b = Self::bottleneck(channels, reduction);
        Ok(Self {
            reduce: store.insert_uniform(
                &alloc::format!("{name}.reduce"),
                &[channels, b],
                1.0 / libm::sqrt(channels as f64),
                rng,
            )?,
            expand: store.insert_uniform(
                &alloc::format!("{name}.expand"),
                &[b, channels],
                1.0 / libm::sqrt(b as f64),
                rng,
            )?,
            channels,
        })
    }
}

/// Channel gates `σ(W₂ relu(W₁ mean_L(u)))` as a `C × 1` column.
pub fn se_excitation(
    tape: &mut Tape,
    store: &ParamStore,
    u: Var,
    se: &SqueezeExcite,
) -> Result<Var> {
    let s = tape.shape(u);
    if s.len() != 2 || s[0] != se.channels {
        return Err(shape_err!("se input {s:?}, want {} x L", se.channels));
    }
    let c = s[0];
    let squeeze = tape.mean(u, 1)?;
    let squeeze = tape.reshape(squeeze, &[1, c])?;
    let w1 = tape.param(store, se.reduce);
    let z = tape.matmul(squeeze, w1)?;
    let z = tape.relu(z);
    let w2 = tape.param(store, se.expand);
    let e = tape.matmul(z, w2)?;
    let gates = tape.sigmoid(e);
    tape.reshape(gates, &[c, 1])
}

/// Rescales each channel of `u` (`C × L`) by its excitation gate.
pub fn se_block_gate(
    tape: &mut Tape,
    store: &ParamStore,
    u: Var,
    se: &SqueezeExcite,
) -> Result<Var> {
    let gates = se_excitation(tape, store, u, se)?;
    tape.mul(u, gates)
}
