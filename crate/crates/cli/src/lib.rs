//! Config parsing and command execution behind the `spinpoint` binary.

pub mod config;
pub mod error;
pub mod run;

pub use config::{parse_config, serialize_config, Command, RunConfig};
pub use error::{CliError, CliResult};
pub use run::{run, Outcome};
