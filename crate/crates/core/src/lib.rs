//! Quasi-continuum golden-rule decay, weak-damping master equations, and
//! random-matrix bath models.
//!
//! The crate is organized around one physical setup: a small system whose
//! upper levels decay into a dense band of bath levels (spacing `delta_omega`,
//! halfwidth/cutoff `Omega`). Everything is in natural units, hbar = k_B = 1.
//!
//! - [`rates`]: golden-rule and thermal rate formulas.
//! - [`model`]: system/bath descriptions and transition catalogs.
//! - [`arrowhead`]: eigensolver for diagonal-plus-border Hamiltonians.
//! - [`quasicontinuum`]: survival amplitude d(t) of a single level coupled to
//!   a uniform band, and the diagnostics built on it.
//! - [`stochastic`]: ensembles with randomized couplings.
//! - [`excitation`]: several upper levels sharing one band (single-excitation
//!   sector), exact and Krylov propagation.
//! - [`lindblad`]: density-matrix propagation for the weak-damping master
//!   equation, steady states, micro-vs-master comparisons.
//! - [`rmm`]: random-matrix bath with exponential density of states.

pub mod arrowhead;
#[cfg(test)]
pub(crate) mod dense_oracle;
pub mod error;
pub mod excitation;
pub mod fit;
pub mod krylov;
pub mod lindblad;
pub mod rmm;
pub mod model;
pub mod quasicontinuum;
pub mod rates;
pub mod special;
pub mod stochastic;

pub use error::{Error, Result};
