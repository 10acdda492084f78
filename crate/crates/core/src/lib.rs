//! Numeric core of the multimodal dementia-screening CRNN.
//!
//! Everything here is `no_std` + `alloc`: tensors and reverse-mode
//! differentiation, the utterance/dialogue model, ANOVA feature screening,
//! training primitives and evaluation metrics. File formats, the command line
//! and threading live in the `adcrnn` crate.
#![no_std]

extern crate alloc;

pub mod autodiff;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod model;
pub mod rng;
pub mod select;
pub mod train;

pub use error::{Error, Result};
