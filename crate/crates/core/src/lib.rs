pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod protocols;
pub mod ring;
pub mod seed;
pub mod sweep;

pub use error::{Error, Result};
