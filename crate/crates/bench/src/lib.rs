//! Experiment driver for autows: cached runs, ablation sweeps, performance
//! profiles and the HTTP service behind the LF vetting UI.

pub mod cache;
pub mod config;
pub mod error;
pub mod profile;
pub mod run;
pub mod serve;
pub mod sweep;

pub use config::{Method, RunConfig};
pub use error::{Error, Result};
pub use run::{run, RunOutcome, RunReport};
pub use sweep::{sweep, SweepAxis, SweepConfig};
