//! Two-photon white-light interferometry in a nonlinear Sagnac loop:
//! synthetic coincidence interferograms and chromatic-dispersion recovery.
//!
//! The crate follows the measurement chain: the dispersion phase model
//! ([`optics`]), the entangled-state algebra that produces the fringe
//! ([`sagnac`]), measurable coincidence/singles rates ([`signal`]),
//! reproducible Poisson acquisition ([`acquisition`], [`io`]), and the
//! inverse problem of recovering CD and TOD with uncertainties
//! ([`estimator`], on top of [`lm`] and [`stats`]).

pub mod acquisition;
pub mod error;
pub mod estimator;
pub mod io;
pub mod lm;
pub mod optics;
pub mod sagnac;
pub mod signal;
pub mod stats;

pub use error::{Error, Result};
