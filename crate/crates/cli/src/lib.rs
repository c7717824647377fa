//! Scenario runner and verification commands behind the `landau` binary.

pub mod norms;
pub mod run;
pub mod scenario;
pub mod verify;

pub use run::{run_scenario, CliError, RunSummary};
pub use scenario::{parse_scenario, Scenario, ValidationErrors};
