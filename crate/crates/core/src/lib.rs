pub mod analysis;
mod error;
pub mod features;
pub mod model;
pub mod nncore;
pub mod quant;
pub mod sigsynth;

pub use error::{Error, Result};
