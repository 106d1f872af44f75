//! Direct and inverse height-slit coordinates for N-periodic Jacobi matrices.

pub mod checks;
pub mod cli;
pub mod error;
pub mod heights;
pub mod inverse;
pub mod io;
pub mod jacobian;
pub mod model;
pub mod quasimomentum;
pub mod spectrum;
pub mod transfer;

pub use error::{Error, Result};
pub use model::{random_point, CoefficientPoint, ReducedPoint};
