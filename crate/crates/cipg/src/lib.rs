//! File formats, dataset adapters, reports and the command-line pipeline
//! around `cipg-core`.

pub mod adapter;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod report;

pub use config::RunConfig;
pub use error::{Error, Result};
