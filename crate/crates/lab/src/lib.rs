//! Scenario files, paired SRPIC runs, CSV output and paired summaries.

pub mod compare;
pub mod config;
pub mod format;
pub mod runner;
