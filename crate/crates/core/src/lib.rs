//! Sensing-SINR maximization for a STAR-RIS assisted ISAC downlink with
//! rate-splitting multiple access.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: dense complex linear algebra.
//! - [`scenario`]: geometry, path loss and seeded Rician channels.
//! - [`model`]: rates, sensing SINR and the lifted helper matrices.
//! - [`conic`]: small semidefinite programs, solved by ADMM or by a
//!   primal-dual interior-point method.
//! - [`beamform`]: the beamforming subproblem (Dinkelbach, Taylor bounds,
//!   sequential rank-one relaxation).
//! - [`starris`]: the surface-coefficient subproblem (Kronecker lifting and
//!   majorization-minimization).
//! - [`driver`]: the alternating outer loop and the benchmark schemes.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod beamform;
pub mod conic;
pub mod driver;
pub mod error;
pub mod model;
pub mod numerics;
pub mod scenario;
pub mod starris;

pub use error::{Error, Result};
