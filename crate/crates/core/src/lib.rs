//! Classical information rates of an n-use Gaussian bosonic channel with
//! additive, nearest-neighbour-correlated classical noise.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: path-graph coupling spectrum, symmetric matrix exponentials,
//!   block covariances and their symplectic eigenvalues.
//! - [`channel`]: input, noise, modulation and output covariance assembly.
//! - [`entropy`]: thermal entropy `g`, Gaussian-state entropy and the rate.
//! - [`optimize`]: feasible region, maximisation over `(r, y)` and sweeps.
//! - [`mc`]: Monte Carlo cross-check of the covariance assembly.

pub mod channel;
pub mod entropy;
pub mod error;
pub mod linalg;
pub mod mc;
pub mod optimize;

pub use channel::{ChannelParams, GaussianState, InputParams};
pub use entropy::{g, gaussian_entropy, transmission_rate, RateResult};
pub use error::{Error, Result};
pub use linalg::{BlockCovariance, CouplingMatrix, SpectralDecomposition, SymplecticSpectrum};
pub use optimize::{FeasibleRegion, OptimizerSettings, SweepResult, ThetaPolicy, YSign};
