pub mod autodiff;
pub mod error;
pub mod field;
pub mod generator;
pub mod metrology;
pub mod objective;
pub mod optimizer;
pub mod patterns;
pub mod physics;

pub use error::{Error, Result};
pub use field::{Field2D, Kernel2D};
