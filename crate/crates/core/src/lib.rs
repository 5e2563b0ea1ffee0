//! Multi-cell 5G handover simulator.
//!
//! The crate is organised around one module per subsystem:
//!
//! - [`scenario`]: cell layout, frequency plan and OU mobility traces.
//! - [`radio`]: path loss, RSRP, SINR and equal-split rates.
//! - [`handover`]: the per-UE monitor / measure / report / execute machine.
//! - [`consensus`]: dynamic average consensus over the cell neighbor graph.
//! - [`env`]: the Dec-POMDP environment stepping all of the above per slot.
//! - [`metrics`]: evaluation metrics computed from episode logs.
//! - [`logs`]: row types for episode logs and their CSV/JSON encodings.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod consensus;
pub mod env;
pub mod error;
pub mod handover;
pub mod logs;
pub mod metrics;
pub mod radio;
pub mod rng;
pub mod scenario;

pub use config::SimConfig;
pub use error::{Error, Result};
