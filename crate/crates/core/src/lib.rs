pub mod equilibrium;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod rng;

pub use error::{Error, Result};
pub use model::*;
