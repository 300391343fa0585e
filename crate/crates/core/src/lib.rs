//! Planning vaccination campaigns and prevalence surveys for a seasonal
//! measles-like epidemic under partial observability.

pub mod belief;
pub mod calibrate;
pub mod cli;
pub mod dp;
pub mod epi;
pub mod error;
pub mod linalg;
pub mod obs;
pub mod param_augment;
pub mod sia;
pub mod voi;

pub use error::{Error, ErrorCategory, Result};
