pub mod cli;
pub mod contraction;
pub mod dichotomy;
pub mod error;
pub mod linalg;
pub mod propagator;
pub mod report;
pub mod similarity;
pub mod spectrum;
pub mod system;

pub use error::{Error, Result};
pub use system::{MatrixSequence, SequenceKind, WindowedValues};
