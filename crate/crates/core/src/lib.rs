//! Chance-constraint probabilities and gradients by characteristic-function
//! inversion.
//!
//! The crate is organised bottom-up:
//!
//! - [`dist`]: univariate disturbance laws (closed-form characteristic
//!   functions, derivatives, moments, samplers) and one-level mixtures.
//! - [`quadrature`]: a batch-evaluated adaptive Gauss-Kronrod 7-15 engine on
//!   `[0, ∞)`.
//! - [`inversion`]: CDF and PDF of a scalar law from its characteristic
//!   function.
//! - [`chance`]: `P(q(z) + g(z)ᵀw ≤ 0)` and its gradient in `z` for
//!   independent (possibly mixture) disturbance components.
//! - [`parallel`]: data-parallel helpers, backed by rayon when the
//!   `parallel` feature is enabled.

pub mod chance;
pub mod dist;
mod error;
pub mod inversion;
pub mod parallel;
pub mod quadrature;

pub use chance::{AffineChanceConstraint, AffineFunctions, DenseAffine, EvalOptions, Evaluation, SparseAffine};
pub use dist::{Distribution, Family};
pub use error::{Error, Result};
pub use inversion::{CfProvider, Inversion};
pub use quadrature::{QuadratureResult, Tolerances};

pub use num_complex::Complex64;
