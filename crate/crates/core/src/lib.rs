//! Memory effects in the exactly solvable damped-qubit model.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`]: environment spectral densities, correlation kernels and
//!   the Ohmic self-energy (exponential integral, bound state).
//! * [`amplitude`]: the decoherence amplitude `c(t)` by closed form, by the
//!   Ohmic spectral integral and by a Volterra integro-differential solver,
//!   plus the time-local rates derived from it.
//! * [`maps`]: the one-parameter qubit channel, Choi matrices, composition
//!   and trace distance.
//! * [`nonmarkov`]: the divisibility gap, its closed forms, the measure
//!   `N_M` and parameter scans.
//!
//! [`special`], [`quad`] and [`optimize`] hold the numerical plumbing.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod amplitude;
pub mod error;
pub mod maps;
pub mod nonmarkov;
pub mod optimize;
pub mod quad;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;
