//! Simulation and exact numerics for critical Galton-Watson processes with
//! overlapping generations.
//!
//! The crate is organised bottom-up:
//!
//! - [`law`]: finite-support life laws and their moments,
//! - [`renewal`]: the associated renewal function and residual times,
//! - [`score`]: individual scores and expected population counts,
//! - [`laplace`]: exact log-Laplace transforms by dynamic programming,
//! - [`limits`]: transforms of the limiting continuous-state process,
//! - [`sim`]: the Monte Carlo engine,
//! - [`multitype`]: decomposable multitype GW-processes,
//! - [`verify`]: convergence sweeps and cross-checks.

pub mod error;
pub mod laplace;
pub mod law;
pub mod limits;
pub mod multitype;
pub mod numeric;
pub mod renewal;
pub mod score;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use laplace::{FddQuery, LaplaceGrid};
pub use law::{LawMoments, LifeHistory, LifeLaw};
pub use renewal::{RenewalTable, ResidualTable};
pub use score::{ScoreProfile, ScoreSpec};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_240_917;
