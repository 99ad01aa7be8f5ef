//! Embedding-level source tracing for synthetic speech.
//!
//! Training objectives (softmax, additive-margin and additive-angular-margin
//! softmax, GE2E, angular prototypical) with analytic gradients, seeded batch
//! samplers, a small feed-forward embedding network, a deterministic SGD
//! trainer, and the evaluation protocol: all-pairs cosine scoring, equal error
//! rate, linear probing and a PCA projection.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, threading and
//! the command-line driver live in the `srctrace` crate.

#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
mod rng;

pub mod batching;
pub mod embedding;
pub mod eval;
pub mod loss;
pub mod matrix;
pub mod network;
pub mod optim;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
