//! From-scratch lung-image classification pipeline: a five-stage image
//! enhancement chain, a dual-branch convolution + transformer model fused by
//! elementwise multiplication, an MLP softmax head, and a deterministic
//! train/eval/report harness. Everything runs on CPU with explicit seeds.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod image;
pub mod mixprocessing;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
