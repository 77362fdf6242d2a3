//! Command-line front end for `stgcn-core`: argument parsing, run
//! configuration and one function per subcommand.
//!
//! Exit codes: 0 success, 1 I/O or transport failure, 2 invalid input or
//! configuration, 3 embedding cache miss in offline mode.

pub mod cli;
pub mod commands;
pub mod config;

pub use cli::{exit_code, run, Cli};
