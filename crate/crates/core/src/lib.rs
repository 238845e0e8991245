pub mod baselines;
pub mod branching;
pub mod convex;
pub mod error;
pub mod ffbd;
pub mod harness;
pub mod ibba;
pub mod model;
pub mod oracle;

pub use error::{Error, Result};
