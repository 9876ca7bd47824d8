//! Online CP factorization and completion of evolving tensors.

pub mod baselines;
pub mod engine;
pub mod error;
pub mod evolution;
pub mod harness;
pub mod linalg;
pub mod tensor;

pub use error::{Error, Result};
