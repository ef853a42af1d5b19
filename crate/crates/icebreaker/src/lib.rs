//! File formats, configuration and the command-line pipeline around
//! [`icebreaker_core`]: synthesize a dataset, train one of the four model
//! variants, predict top-K lists and evaluate them.

pub mod config;
mod error;
pub mod formats;
pub mod pipeline;

pub use error::{Error, Result};
