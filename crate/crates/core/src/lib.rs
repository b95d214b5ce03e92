pub mod analysis;
pub mod cli;
pub mod data;
pub mod error;
pub mod linalg;
pub mod model;
pub mod objectives;
pub mod optim;
pub mod retrieval;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use rng::Rng;
