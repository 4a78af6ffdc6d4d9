//! Configuration, reports and subcommands of the `strain-cascade` tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod report;
pub mod sweep;

pub use commands::{cmd_simulate, cmd_sweep, cmd_thresholds, cmd_validate, cmd_verify, verify_against, InitialSource, Summary};
pub use config::{parse_config, parse_config_str, RunConfig};
pub use error::CliError;
pub use sweep::Axis;
