//! Population balance model of AB2 step-growth polymerization with
//! intramolecular cyclization, discretized by collocation on a tensor
//! grid of Gaussian atoms.
//!
//! The acyclic population `f0(x, y)` and the cyclized population
//! `f1(x, y)` are indexed by the number of terminal units `x` and linear
//! units `y`. Time stepping is implicit Euler with a Newton solve for the
//! nonlinear coagulation term.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod error;
pub mod kinetics;
pub mod oracle;
pub mod postprocess;
pub mod quad;
pub mod solver;

pub use basis::{Distribution2D, GaussianBasis, GridSpec, OperatorCache};
pub use error::{BasisError, OracleError, PostError, SolverError};
pub use kinetics::{AssembledSystem, CyclicLoad, KineticParams};
pub use solver::{integrate, Snapshot, SolverConfig, Trajectory};
