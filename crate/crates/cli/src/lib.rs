//! Library half of the `matsol` command-line tool: scenario documents,
//! CSV and PPM export, run reports and the subcommands themselves.

pub mod csv;
pub mod ppm;
pub mod report;
pub mod run;
pub mod scenario;
pub mod selftest;

pub use report::RunReport;
pub use run::{run, CliError, Command, RunConfig, Source};
