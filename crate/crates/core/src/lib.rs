//! Numerical laboratory for monotonicity formulas on polynomial model
//! domains: harmonic polynomials, Weiss and Almgren functionals, polynomial
//! harmonic measures, synthesized jump functions, blowups and Whitney jets.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blowup;
pub mod error;
pub mod field;
pub mod functionals;
pub mod jumpsynth;
pub mod layer;
pub mod linalg;
pub mod measures;
pub mod poly;
pub mod quadrature;
pub mod sphere;
pub mod strata;

pub use error::{Error, Result};
