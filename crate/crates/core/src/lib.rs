pub mod agent;
pub mod autodiff;
pub mod env;
pub mod error;
pub mod gradcheck;
pub mod instruction;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod params;
pub mod relations;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor2;
