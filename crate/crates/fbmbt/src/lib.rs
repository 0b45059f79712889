//! Simulation and verification toolkit for fractional Brownian motion in
//! Brownian time, the iterated process `Z_t = X_{Y_t}` built from a two-sided
//! fractional Brownian motion `X` and an independent Brownian motion `Y`.
//!
//! The crate provides:
//!
//! * exact fBm path generation on uniform dyadic grids ([`gaussian`]),
//! * the dyadic level-crossing scheme for the inner Brownian motion: embedded
//!   random walk, up/down crossing counts and a crossing-based local-time
//!   estimator ([`crossing`]),
//! * Hermite polynomials and the limit constants built from Gaussian moments
//!   and summed autocorrelations ([`hermite`]),
//! * weighted power-variation statistics together with the exact algebraic
//!   identities that separate the outer from the inner process
//!   ([`variation`]),
//! * computable realizations of the limiting objects: Stratonovich endpoint
//!   forms, discretized Wiener integrals and local-time-weighted integrals
//!   ([`limits`]),
//! * a deterministic, parallel Monte Carlo harness with statistical
//!   aggregation and CSV/JSON reporting ([`experiment`]).

pub mod crossing;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod hermite;
pub mod limits;
pub mod rng;
pub mod stats;
pub mod sum;
pub mod variation;

pub use error::Error;
pub use gaussian::{FbmGrid, Hurst};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
