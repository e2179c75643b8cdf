//! Simulation and Monte Carlo verification of compensated fragmentation processes, viewed
//! as branching Lévy processes on the log-size axis.
//!
//! The pieces, bottom up:
//!
//! * [`dislocation`]: dislocation measures ν, the cumulant κ, truncation and spine kernels.
//! * [`levy`]: spectrally negative Lévy exponents, Esscher tilts and path simulation.
//! * [`genealogy`]: labels, prefixes and ancestors.
//! * [`branching`]: the truncated labelled branching process and its coupled views.
//! * [`martingales`]: W, ∂W and ∂W_a.
//! * [`spine`]: forward decorated spine and backward size-biased estimators.
//! * [`stats`]: means, standard errors, weighted KS and trace summaries.
//! * [`suites`] and [`scenario`]: the verification suites and their configuration.

pub mod branching;
pub mod dislocation;
pub mod error;
pub mod genealogy;
pub mod levy;
pub mod martingales;
pub mod numeric;
pub mod replicas;
pub mod scenario;
pub mod spine;
pub mod stats;
pub mod suites;

pub use error::{Error, Result};
