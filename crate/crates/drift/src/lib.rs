pub mod block;
pub mod channel;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod federation;
pub mod harness;
pub mod loss;
pub mod model;
pub mod partition;
pub mod timing;

pub use error::{DriftError, Result};
