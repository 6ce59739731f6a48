//! Command implementations behind the `slideret` binary.
//!
//! Each `cmd_*` function is what one subcommand runs; `main.rs` only parses
//! flags and maps errors to exit codes (1 for validation errors, 2 for
//! failures while a stage was running).

pub mod commands;
pub mod config;
pub mod selftest;

pub use commands::*;
pub use config::ExperimentConfig;

/// Exit code for an error returned by any command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<slideret_core::Error>() {
        Some(e) if e.is_validation() => 1,
        _ => 2,
    }
}
