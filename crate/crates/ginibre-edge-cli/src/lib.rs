//! Command-line front end for `ginibre-edge`: run records, output formats
//! and the verbs `limit`, `finite`, `rate`, `mc`, `scan` and `selftest`.
//!
//! Every output carries the full [`config::RunConfig`] that produced it, so
//! a run can be repeated from its output file alone.

pub mod app;
pub mod config;
pub mod output;
pub mod run;

pub use app::main_with_args;
