//! Dataset and model files, run configuration, closed-loop experiments, and
//! reports around [`demobot_core`].

pub mod config;
pub mod error;
pub mod format;
pub mod harness;
pub mod report;
pub mod stats;

pub use config::Config;
pub use error::{Error, Result};
