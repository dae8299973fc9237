pub mod cloud;
pub mod dense;
pub mod cli;
pub mod descriptors;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod learn;
pub mod linalg;
pub mod matching;
pub mod preprocess;
pub mod render;
pub mod sampling;
pub mod seed;
pub mod shapes;
pub mod solver;
pub mod spatial;

pub use error::{Error, Result};

/// Toolkit version embedded in every written report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
