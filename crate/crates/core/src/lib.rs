pub mod abstraction;
pub mod config;
pub mod decomposition;
pub mod error;
pub mod experiment;
pub mod expr;
pub mod field;
pub mod interval;
pub mod lp;
pub mod model;
pub mod observer;
pub mod simulate;
pub mod stability;
pub mod system;

pub use error::{Result, SmioError};
pub use field::{FieldRef, VectorField};
pub use interval::IntervalVector;
