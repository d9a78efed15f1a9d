pub mod contour;
pub mod driver;
pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod models;
pub mod propagator;
pub mod quadrature;
pub mod renorm;
pub mod validation;

pub use error::{Result, TdsrError};
