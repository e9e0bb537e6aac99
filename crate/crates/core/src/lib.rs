pub mod cli;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod functional;
pub mod gradients;
pub mod metrics;
pub mod optimizer;
pub mod pipeline;
pub mod plot;
pub mod reconstruct;

pub use error::{Error, Result};
