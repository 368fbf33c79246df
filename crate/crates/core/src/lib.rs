//! Finite-dimensional Hilbert-valued Wiener structures and quantitative
//! Gaussian approximation bounds.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: symmetric kernels over a truncated `ℌ` with a `K`-valued slot,
//!   contractions and norms of operators on `K`.
//! * [`chaos`]: chaos functionals, Hermite machinery, Malliavin derivative,
//!   divergence, Ornstein–Uhlenbeck operators and the Mehler coupling.
//! * [`stein`]: covariance operators, Malliavin–Stein and second-order
//!   Poincaré bounds, and a Monte Carlo lower estimate of the `d₂` distance.
//! * [`apps`]: the Breuer–Major, shallow network and parabolic Anderson
//!   model drivers.
//!
//! All computations are in double precision. Randomness is drawn from
//! replicate-keyed streams ([`rng::StreamKey`]) so Monte Carlo results do not
//! depend on the number of worker threads.

pub mod apps;
pub mod chaos;
mod error;
pub mod linalg;
pub mod mc;
pub mod quadrature;
pub mod rng;
pub mod stein;
pub mod tensor;

pub use error::{Error, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
