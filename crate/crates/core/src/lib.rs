//! Estimation of invertible linear processes in a finite-dimensional
//! function space.

pub mod arma;
pub mod cov;
pub mod eigen;
pub mod error;
pub mod invertible;
pub mod io;
pub mod sim;
pub mod space;

pub use error::{HinvError, Result};
pub use space::{BasisKind, BasisSpace, BlockOp, Curve, LinearOp, Norms, Operator, StackedCurve};
