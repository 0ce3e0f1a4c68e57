//! Estimate-verification experiments: config, instances, checks, reports
//! and the command implementations behind the CLI.

pub mod checks;
pub mod config;
pub mod instance;
pub mod report;
pub mod run;

pub use config::{Cell, CheckKind, ExperimentConfig};
pub use instance::Instance;
pub use report::{CheckReport, Flag, Row, Status};
pub use run::{potential, run_checks, solve, sweep, verify, PotentialKind, PotentialSpec};
