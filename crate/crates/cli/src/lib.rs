//! Batch front end for the `selfsim` library: reads measure and kernel spec
//! files, runs atoms → spectrum → slope fit / small-ball estimates, and writes
//! plot-ready CSV plus a JSON report into an output directory.
//!
//! Exit-status convention used by the binary: 0 success, 1 domain failure
//! (invalid measure, failed fit, estimate out of domain), 2 I/O or parse
//! failure.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod render;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use pipeline::{run, Goal, Outcome};
