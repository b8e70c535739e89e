pub mod construct;
pub mod convert;
pub mod error;
pub mod grid;
pub mod io;
pub mod layers;
pub mod matrix;
pub mod scalar;
pub mod target;
pub mod verify;

pub use error::{Error, Result};
pub use grid::GridParams;
pub use matrix::{Matrix, SeqMatrix};
pub use scalar::{Mode, Rational, Scalar};
pub use target::PiecewiseConstantFn;
