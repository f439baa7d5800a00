//! Experiment harness for the linesim simulation core: configuration, track
//! bundles, trial sweeps, the study suite, report rendering, and the CLI.

pub mod cli;
pub mod config;
pub mod report;
pub mod studies;
pub mod tracks;
pub mod tune;
