//! Brute-force references: the truncated discrete master equation and the
//! closed moment equations. Neither shares code with the collocation solver.

pub mod dopri;
mod master;
mod moments;

pub use master::{master_equation_run, Coupling, LatticeMoments, MasterOptions, MasterState, LEAK_GATE, MAX_CELLS};
pub use moments::{moment_rhs, moments_at_conversions, moments_at_times, MomentPoint, MOMENT_RTOL};
