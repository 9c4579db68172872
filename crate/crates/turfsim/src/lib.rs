//! File formats, parallel sweeps and the command-line front end for
//! `turfsim-core`.

pub mod cli;
pub mod config;
pub mod dayevents;
pub mod eventlog;
pub mod report;
pub mod sweep;
