//! File formats, run configuration, the benchmark harness and the
//! `despeckle` command line.

pub mod bench;
mod cli;
pub mod config;
pub mod pgm;

pub use cli::{cli_dispatch, EXIT_DIVERGENCE, EXIT_OK, EXIT_USAGE};
