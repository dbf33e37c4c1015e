pub mod error;
pub mod numeric;
pub mod rng;
pub mod softmax;
pub mod agents;
pub mod diagnostics;
pub mod env;
pub mod experiment;
pub mod tabular;

pub use error::{Error, Result};
pub use rng::RngStream;
