//! Command-line front end: loads a family, runs sweeps and reports, and
//! writes artifacts under an output directory.

pub mod config;
pub mod render;
pub mod run;

pub use config::{Command, RunConfig};
pub use run::{dispatch, Failure};
