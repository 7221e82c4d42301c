pub mod baselines;
pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod regions;
pub mod training;

pub use error::{Error, Result};
