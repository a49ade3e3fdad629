pub mod error;
pub mod estimation;
pub mod feasibility;
pub mod harness;
pub mod model;
pub mod normal;
pub mod objective;
pub mod optimizer;
pub mod rng;
pub mod worst_case;

pub use error::{Error, Result};
