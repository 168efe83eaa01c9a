//! Arm-limited coagulation: closed-form solutions, truncated kinetic
//! integration, characteristic-curve generating functions and exact
//! stochastic simulation.
//!
//! Particles carry a size `m >= 1` and a number of free arms `a >= 0`. In
//! the oriented model a particle grabs another at a rate proportional to
//! its own arms, `(a, m) + (a', m') -> (a + a' - 1, m + m')`. In the
//! symmetric model every pair of arms on distinct particles reacts at unit
//! rate, `(a, m) + (a', m') -> (a + a' - 2, m + m')`.

pub mod characteristics;
pub mod closed_form;
pub mod error;
pub mod grid;
pub mod io;
pub mod kinetics;
pub mod measures;
pub mod montecarlo;
mod special;

pub use characteristics::{LagrangeSeries, SeriesTable};
pub use closed_form::{CaseTag, CriticalTime, Kernel, ModelKind, ModelSpec, Rescaled};
pub use error::{Error, Result};
pub use grid::{ConcentrationGrid, Overflow, TruncationSpec};
pub use kinetics::{IntegrateOptions, Snapshot, StepStats, Trajectory};
pub use measures::{borel, DiscreteMeasure, MomentSummary};
pub use montecarlo::{EmpiricalTrajectory, ParticleSystem};
pub use special::{ln_binomial, ln_factorial, ln_gamma};
