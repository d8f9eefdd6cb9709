pub mod decode;
pub mod error;
pub mod ewc;
pub mod grad;
pub mod harness;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod sim;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
