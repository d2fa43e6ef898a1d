//! Semiclassical eigenvalues and dipole matrix elements of hydrogen in a
//! magnetic field from closed classical orbits.
//!
//! The pipeline runs in four stages, each with its own module:
//!
//! 1. [`orbits`] finds every orbit that leaves and returns to the nucleus up
//!    to a scaled-action cutoff, using the regularized dynamics in
//!    [`dynamics`].
//! 2. [`signal`] turns the orbit table and a set of [`angular`] functions into
//!    an `L x L` cross-correlated recurrence signal.
//! 3. [`inversion`] fits the signal with a sum of complex exponentials by
//!    filter diagonalization, giving eigenvalues `w_k` of the scaling
//!    parameter and amplitude vectors `b_k`.
//! 4. [`spectrum`] converts the lines into transition strengths, oscillator
//!    strengths and laboratory field values.
//!
//! [`pipeline`] strings the stages together with file persistence.

pub mod angular;
pub mod dynamics;
pub mod hash;
pub mod inversion;
pub mod orbits;
pub mod par;
pub mod pipeline;
pub mod plot;
pub mod roots;
pub mod selftest;
pub mod signal;
pub mod spectrum;
pub mod textfile;

mod error;

pub use error::{Error, Result};

/// Crate version embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
