//! File formats, the command line and parallel drivers around `fcmm-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod parallel;
pub mod report;

pub use error::CliError;
