//! Numerical toolkit for embedding constants between generalized weighted
//! Lorentz spaces: the explicit quantities B1..B8 characterizing the optimal
//! constant, the quasiconcave discretization layer (covering sequences,
//! discrete Hardy constants, localized constants), and a brute-force oracle
//! that estimates the constant directly by optimizing over test functions.
//!
//! Everything numeric is generic over the scalar via [`real::Real`];
//! concrete `f64` aliases live at the crate root.

// Comparisons written as !(x > 0) are deliberate: they treat NaN as a
// failure, which x <= 0 would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Quadrature node tables keep the full published digits.
#![allow(clippy::excessive_precision)]
// Index-driven marches over parallel panel arrays read better indexed.
#![allow(clippy::needless_range_loop)]

pub mod covering;
pub mod discrete;
pub mod error;
pub mod functionals;
pub mod grids;
pub mod oracle;
pub mod quad;
pub mod real;
pub mod report;
pub mod weights;

pub use error::{CoreError, Result};
pub use real::Real;

/// Production scalar type.
pub type Scalar = f64;

pub type Domain64 = weights::Domain<Scalar>;
pub type Weight64 = weights::Weight<Scalar>;
pub type WeightSet64 = weights::WeightSet<Scalar>;
pub type Grid64 = grids::Grid<Scalar>;
pub type ParamTriple64 = functionals::ParamTriple<Scalar>;
pub type Functionals64 = functionals::Functionals<Scalar>;
pub type CoveringSequence64 = covering::CoveringSequence<Scalar>;
