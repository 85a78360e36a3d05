//! Parameterized pre-crash scenario generation, synthetic dash-cam datasets,
//! and a two-stage transfer-learning harness for steering prediction.

pub mod catalog;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fmt;
pub mod learner;
pub mod render;
pub mod rng;
pub mod sampling;
pub mod sim;

pub use error::{Error, Result};
