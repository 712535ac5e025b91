//! Closed-form gradient adjustment for low-rank adapters.
//!
//! The crate computes adjusted LoRA factor gradients whose induced update on
//! the full weight is the Frobenius-nearest reachable point to the full
//! fine-tuning gradient, and wraps that in SGD and AdamW optimizers, a small
//! analytic-backprop model zoo, brute-force oracles and an experiment harness.

pub mod error;
pub mod gradadjust;
pub mod harness;
pub mod linalg;
pub mod lora;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod sylvester;

pub use error::{Error, Result};
pub use linalg::Matrix;
