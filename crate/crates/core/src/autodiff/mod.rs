//! Dense reverse-mode differentiation over `f64` tensors.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters live in
//! a [`ParamStore`] and are bound onto the tape with [`Tape::param`]; after
//! [`Tape::backward`] their gradients come back through [`Gradients`].

pub mod gradcheck;
mod layers;
mod params;
mod tape;
mod tensor;

pub use layers::{
    lstm_layer, sdp_self_attention, se_block_gate, se_excitation, Dense, LstmDirection,
    LstmLayer, SqueezeExcite,
};
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::{conv1d_out_len, sigmoid};

/// Output length of a 1-D convolution, `None` when the stride/padding
/// combination is invalid.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    conv1d_out_len(len, kernel, stride, padding)
}
