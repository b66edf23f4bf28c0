//! Library side of the `plab` command line tool.

pub mod config;
pub mod report;
pub mod run;

pub use report::{emit_table, RunReport};
pub use run::run_config;
