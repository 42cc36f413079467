//! Command-line front end for `sassc-core`: instance files, solution files,
//! certificates and study reports.
//!
//! Every JSON file is written in canonical form (sorted keys, `{:.16e}`
//! floats) so that runs can be compared by hash. Reports carry the SHA-256
//! of the canonical instance and its scenario seed.

pub mod canonical;
pub mod cli;
pub mod commands;
pub mod error;
pub mod files;
pub mod schema;

pub use cli::{run, RunConfig};
pub use error::{exit, CliError, CliResult};
