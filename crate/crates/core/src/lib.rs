pub mod analysis;
pub mod config;
pub mod basis;
pub mod csvio;
pub mod curve;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod hermite;
pub mod model;
pub mod sgd;
pub mod sim;

pub use error::{Error, Result};
