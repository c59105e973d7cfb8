pub mod cli;
pub mod error;
pub mod metrics;
pub mod morphology;
pub mod nnmath;
pub mod preprocess;
pub mod synthgen;
pub mod tree;
pub mod uncertainty;
pub mod volume;

pub use error::{Error, Result};
