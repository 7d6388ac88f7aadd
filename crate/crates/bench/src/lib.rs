//! Benchmark harness: configuration, Monte Carlo campaigns, CSV/JSON
//! reports, the property suite and the `irsmc` command line.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod report;
pub mod verify;
