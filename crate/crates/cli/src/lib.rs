//! Command implementations behind the `hexcell` binary. Each command is a
//! plain function taking an options struct, so tests drive them directly.

pub mod bound;
pub mod config;
pub mod error;
pub mod eval;
pub mod export;
pub mod manifest;
pub mod sweep;
pub mod train;

pub use config::RunConfig;
pub use error::{CmdResult, Failure};
