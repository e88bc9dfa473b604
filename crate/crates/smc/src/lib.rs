//! File formats, configuration and the command line runner for
//! [`smc_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod factors;
pub mod ids;
pub mod manifest;
pub mod mtx;
pub mod parallel;
pub mod report;

pub use error::{Error, Result};
