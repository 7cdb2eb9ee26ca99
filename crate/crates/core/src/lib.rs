//! Moduli of smoothness, best polynomial approximation and numerical checks of
//! Whitney-type inequalities on axis-parallel boxes.

pub mod corpus;
pub mod differences;
pub mod domain;
pub mod error;
pub mod identities;
pub mod polyapprox;
pub mod verifier;

pub use domain::{AxisBox, AxisSubset, Exponent, Func, GridFunction, GridSpec, MultiIndex, StepVector};
pub use error::{Error, Result};
