//! File-system side of the engine: configuration, datasets on disk,
//! experiment execution, sweeps and analyses.

pub mod analyze;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod sweep;

pub use error::{HarnessError, Result};
