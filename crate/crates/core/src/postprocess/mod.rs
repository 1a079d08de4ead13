//! Scalar traces and distributions recovered from solver states.

mod cycles;
mod lines;
mod transform;

use crate::basis::MomentFunctionals;
use crate::error::PostError;
use crate::solver::{Snapshot, Trajectory};

pub use cycles::{
    cycle_length_distribution, depth_sum, expected_cycle_length, expected_depth, median, snapshot_flux,
    CycleDistribution, CycleFlux,
};
pub use lines::{branching_distribution, chain_length_distribution, weighted_mean, LineDistribution, LineKind};
pub use transform::{db_length_field, jacobian, level_values, to_db_length, transform_point, FieldPoint};

/// Per-monomer scalars at one instant.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScalarRow {
    pub t: f64,
    /// Fraction of reacted A groups, `1 - mu f0`.
    pub conversion: f64,
    /// `mu (f0 + f1)`, the total molecule count.
    pub molecule_count: f64,
    pub free_a: f64,
    pub linear: f64,
    pub terminal: f64,
    pub dendritic: f64,
    /// Fraction of molecules carrying a ring, `mu f1 / c`.
    pub cyclized: f64,
    pub branching: f64,
    pub mass: f64,
}

/// Frey degree of branching `D / (D + L/2)`, zero when both vanish.
pub fn degree_of_branching(dendritic: f64, linear: f64) -> f64 {
    let den = dendritic + 0.5 * linear;
    if den == 0.0 {
        0.0
    } else {
        dendritic / den
    }
}

pub fn scalars_of(functionals: &MomentFunctionals, snap: &Snapshot) -> ScalarRow {
    let a = functionals.apply(&snap.beta0);
    let c = functionals.apply(&snap.beta1);
    let conversion = 1.0 - a.mu;
    let free_a = 1.0 - conversion;
    let terminal = a.mu_x + c.mu_x;
    let linear = a.mu_y + c.mu_y;
    let dendritic = terminal - free_a;
    ScalarRow {
        t: snap.t,
        conversion,
        molecule_count: a.mu + c.mu,
        free_a,
        linear,
        terminal,
        dendritic,
        cyclized: if conversion > 0.0 { c.mu / conversion } else { 0.0 },
        branching: degree_of_branching(dendritic, linear),
        mass: a.acyclic_mass() + c.cyclic_mass(),
    }
}

/// Scalars at every accepted step. `functionals` must be the unit-count
/// (omega = 1) moments.
pub fn scalar_traces(functionals: &MomentFunctionals, traj: &Trajectory) -> Result<Vec<ScalarRow>, PostError> {
    if traj.snapshots.is_empty() {
        return Err(PostError::EmptyTrajectory);
    }
    Ok(traj.snapshots.iter().map(|s| scalars_of(functionals, s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branching_conventions() {
        assert_eq!(degree_of_branching(0.0, 0.0), 0.0);
        assert_eq!(degree_of_branching(1.0, 0.0), 1.0);
        assert!((degree_of_branching(1.0, 2.0) - 0.5).abs() < 1e-15);
    }
}
