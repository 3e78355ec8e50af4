//! File formats and commands of the `mona` tool: netlist analysis, transient
//! runs written as CSV, and MNA/MONA comparisons.

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;

pub use commands::{cmd_analyze, cmd_compare, cmd_run, CompareOptions};
pub use error::CliError;
pub use scenario::{parse_scenario, Scenario, ScenarioSettings};
