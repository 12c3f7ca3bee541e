pub mod env;
pub mod error;
pub mod gw;
pub mod prf;
pub mod resist;
pub mod stream;
pub mod walk;
pub mod estimators;
pub mod harness;

pub use error::{Error, Result};
