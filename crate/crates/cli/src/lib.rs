//! Command-line front end: configuration, replica ensembles, output files,
//! analysis and the check suite.

pub mod analyze;
pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod runner;
