//! Numerical laboratory for large deviations of p-fold self-intersection
//! local times of the continuous-time simple random walk.
//!
//! * [`lattice_walk`]: event-driven walk simulation, local times, SILT,
//!   torus folding and exponential stopping.
//! * [`green_torus`]: spectral Green function and heat kernel of the
//!   killed torus walk.
//! * [`gauss_field`]: exact Gaussian fields with Green covariance, the
//!   Eisenbaum isomorphism check and Gaussian tail bounds.
//! * [`variational`]: discrete and continuum constrained energies, the
//!   deviation constant `χ_{d,p}` and the Gagliardo-Nirenberg constant.
//! * [`ldp`]: Monte Carlo tail probabilities and rate extraction.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gauss_field;
pub mod green_torus;
mod kahan;
pub mod lattice_walk;
pub mod ldp;
pub mod params;
pub mod rng;
pub mod table;
pub mod torus;
pub mod variational;

pub use error::{Error, Result};
pub use params::{ProblemParams, ScalingSchedule};
