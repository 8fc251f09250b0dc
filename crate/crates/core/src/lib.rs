//! Text-independent speaker identification with linear and neural
//! predictive vector-quantization codebooks.

pub mod corpus;
pub mod error;
pub mod experiment;
pub mod frontend;
pub mod lpc;
pub mod measures;
pub mod neural;
pub mod recognition;
pub mod seed;
pub mod vq;

pub use error::{Error, ErrorCategory, Result};
