pub mod baselines;
pub mod error;
pub mod hpe;
pub mod optimal;
pub mod oracle;
pub mod problems;
pub mod restart;
pub mod rng;
pub mod tensor_step;
pub mod trace;

pub use error::{Error, Result};
