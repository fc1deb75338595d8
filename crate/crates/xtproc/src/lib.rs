//! Simulation and dependence analysis for extremal t max-stable processes.
//!
//! The library covers five capabilities around a single model family, a
//! tail index plus a correlation structure:
//!
//! * spectral simulation of extremal t fields (Gaussian spectral functions)
//!   and multivariate extremal t vectors (elliptical t spectral vectors),
//! * evaluation of the dependence (exponent) function, the extremal t CDF,
//!   and extremal coefficients, backed by a randomized quasi-Monte Carlo
//!   multivariate Student t CDF engine,
//! * closed-form norming constants and the special functions behind them,
//! * reproducible seeded samplers for Poisson points, Gaussian fields,
//!   t processes and elliptical t vectors,
//! * a Monte Carlo harness checking that normalized block maxima of
//!   t processes converge to the extremal t law.
//!
//! The `xtproc` binary exposes all of it as batch subcommands; see the
//! crate README.

// `!(x > 0.0)` rejects NaN along with non-positive values; the positive
// comparison is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dependence;
mod error;
pub mod io;
pub mod mda;
pub mod model;
pub mod numerics;
pub mod samplers;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{
    build_correlation_matrix, validate_correlation_matrix, CorrelationModel, CorrelationSpec,
    ExtremalTModel, SiteSet, SpectralSettings, TailIndex,
};
