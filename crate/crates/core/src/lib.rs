//! Cutoff-rate maximization for RIS-aided MIMO links with discrete signaling.
//!
//! The crate is organized bottom-up:
//!
//! - [`channel`]: geometry, path loss, Rician channel sampling and the
//!   effective channel `H(θ)`.
//! - [`constellation`]: unit-energy alphabets and the enumerated transmit
//!   vectors with their deduplicated difference Gram matrices.
//! - [`metrics`]: cutoff rate, objective, Monte Carlo mutual information and
//!   the Gaussian log-det baseline.
//! - [`pgm`]: projected gradient method with Armijo backtracking.
//! - [`sca`]: successive convex approximation with a projected first-order
//!   inner solver.
//! - [`harness`]: configuration, experiments, figure reproduction and CSV
//!   output used by the `ris-cutoff` binary.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod constellation;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod pgm;
pub mod rng;
pub mod sca;

pub use error::{Error, Result};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = DVector<Complex64>;
