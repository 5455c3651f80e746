//! Path-space functionals and exit-time Monte Carlo for Lévy-driven
//! controlled diffusions.
//!
//! * [`cadlag`]: piecewise-affine càdlàg paths with exact left limits.
//! * [`skorohod`]: time changes and bracketed Skorohod distances.
//! * [`domain`], [`entrance`]: convex domains, entrance times and points,
//!   and the continuity-set classifiers.
//! * [`levy`], [`sde`], [`value`]: noise models, Euler simulation of the
//!   controlled SDE and the discounted value estimator.
//! * [`nonlocal`]: quadrature for the integro-differential operator and
//!   pointwise residuals of smooth candidates.
//! * [`experiments`]: the named reproducible experiments.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cadlag;
pub mod domain;
pub mod entrance;
pub mod error;
pub mod experiments;
pub mod gen;
pub mod levy;
pub mod nonlocal;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod skorohod;
pub mod table;
pub mod value;

pub use cadlag::{CadlagPath, PathBuilder, Tail};
pub use domain::{Domain, DomainSpec};
pub use error::{Error, Result};
