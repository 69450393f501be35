//! Flexibility assessment for systems whose binary reference signal may be
//! flipped, with affine recourse policies.
//!
//! The crate is generic over the scalar type. The aliases at the root fix
//! it to `f64`, which is what the command-line tool uses; the exact
//! `BigRational` instantiation serves as a reference in tests.

pub mod error;
pub mod fixtures;
pub mod matrix;
pub mod milp;
pub mod oracle;
pub mod reform;
pub mod robustness;
pub mod scalar;
pub mod system;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub use num_rational::BigRational;

pub type Dynamics = system::SystemDynamics<f64>;
pub type Constraints = system::ConstraintSet<f64>;
pub type Cost = system::CostSpec<f64>;
pub type Model = system::Instance<f64>;
pub type Problem = milp::MilpProblem<f64>;
