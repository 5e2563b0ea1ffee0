//! Decentralized PPO for per-cell handover parameter control.
//!
//! Each cell owns an [`agent::Agent`] with an attention-encoder actor and
//! critic ([`nn`]). Gradients are derived by hand and checked against finite
//! differences in the test suite. [`rollout`] drives the simulator for
//! training and evaluation, and [`checkpoint`] persists agents.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod optim;
pub mod ppo;
pub mod rollout;
pub mod tensor;

pub use error::{LearnError, Result};
