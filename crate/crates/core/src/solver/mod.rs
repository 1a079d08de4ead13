//! Implicit Euler time stepping with Newton iterations for the acyclic
//! population and a linear implicit update for the cyclized one.

mod refine;

use std::sync::Arc;

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{GaussianBasis, OperatorCache};
use crate::error::SolverError;
use crate::kinetics::{AssembledSystem, CyclicLoad};

pub use refine::{
    checkpoint_between, enriched_grid, refine_basis, refine_rounds, remap_coefficients, RefineConfig, RefineOutcome,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub tau_init: f64,
    pub tau_growth: f64,
    pub tau_shrink: f64,
    /// Largest conversion gain accepted in one step.
    pub max_conversion_step: f64,
    pub target_conversion: f64,
    /// Conversions at which interpolated snapshots are recorded.
    pub checkpoints: Vec<f64>,
    pub tol_add: f64,
    pub tol_remove: f64,
    pub max_refine_rounds: usize,
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-14,
            newton_max_iter: 25,
            tau_init: 1e-10,
            tau_growth: 2.0,
            tau_shrink: 0.5,
            max_conversion_step: 0.01,
            target_conversion: 0.9,
            checkpoints: Vec::new(),
            tol_add: 1e-8,
            tol_remove: 1e-10,
            max_refine_rounds: 3,
            max_steps: 100_000,
        }
    }
}

impl SolverConfig {
    pub fn with_target(mut self, target: f64) -> Self {
        self.target_conversion = target;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if !(self.newton_tol > 0.0) {
            return bad("newton_tol must be positive");
        }
        if self.newton_max_iter == 0 {
            return bad("newton_max_iter must be at least 1");
        }
        if !(self.tau_init > 0.0) {
            return bad("tau_init must be positive");
        }
        if !(self.tau_growth > 1.0) {
            return bad("tau_growth must exceed 1");
        }
        if !(self.tau_shrink > 0.0 && self.tau_shrink < 1.0) {
            return bad("tau_shrink must lie in (0, 1)");
        }
        if !(self.max_conversion_step > 0.0) {
            return bad("max_conversion_step must be positive");
        }
        if !(self.target_conversion > 0.0 && self.target_conversion < 1.0) {
            return bad("target_conversion must lie in (0, 1)");
        }
        if !(self.tol_remove < self.tol_add) {
            return bad("tol_remove must be below tol_add");
        }
        if self.checkpoints.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
            return bad("checkpoints must lie in (0, 1)");
        }
        Ok(())
    }
}

/// State of both populations at one instant.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub beta0: DVector<f64>,
    pub beta1: DVector<f64>,
    pub conversion: f64,
}

#[derive(Clone, Debug, Default)]
pub struct StepDiagnostics {
    pub tau: f64,
    pub iterations: usize,
    /// Max-norm of every Newton correction in order.
    pub corrections: Vec<f64>,
    pub mass: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    /// Every accepted step, starting with the initial state.
    pub snapshots: Vec<Snapshot>,
    /// Interpolated states at the requested conversions.
    pub checkpoints: Vec<Snapshot>,
    /// One entry per accepted step (none for the initial state).
    pub diagnostics: Vec<StepDiagnostics>,
    /// Bases used, one per refinement epoch.
    pub basis_history: Vec<Arc<GaussianBasis>>,
    /// Rejected step attempts.
    pub rejected: usize,
}

impl Trajectory {
    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    pub fn checkpoint(&self, conversion: f64) -> Option<&Snapshot> {
        self.checkpoints.iter().find(|s| (s.conversion - conversion).abs() < 1e-12)
    }

    /// Snapshot at a conversion, by linear interpolation in time between
    /// the bracketing accepted steps.
    pub fn at_conversion(&self, conversion: f64) -> Option<Snapshot> {
        let s = &self.snapshots;
        let k = s.windows(2).position(|w| w[0].conversion <= conversion && conversion <= w[1].conversion)?;
        let (a, b) = (&s[k], &s[k + 1]);
        let span = b.conversion - a.conversion;
        let theta = if span > 0.0 { (conversion - a.conversion) / span } else { 1.0 };
        Some(Snapshot {
            t: a.t + theta * (b.t - a.t),
            beta0: &a.beta0 * (1.0 - theta) + &b.beta0 * theta,
            beta1: &a.beta1 * (1.0 - theta) + &b.beta1 * theta,
            conversion,
        })
    }

    /// Snapshot at a time, by linear interpolation between accepted steps.
    pub fn at_time(&self, t: f64) -> Option<Snapshot> {
        let s = &self.snapshots;
        let k = s.windows(2).position(|w| w[0].t <= t && t <= w[1].t)?;
        let (a, b) = (&s[k], &s[k + 1]);
        let theta = (t - a.t) / (b.t - a.t);
        Some(Snapshot {
            t,
            beta0: &a.beta0 * (1.0 - theta) + &b.beta0 * theta,
            beta1: &a.beta1 * (1.0 - theta) + &b.beta1 * theta,
            conversion: a.conversion + theta * (b.conversion - a.conversion),
        })
    }
}

/// Monomer start: nodal delta at (1, 0) scaled to unit zeroth moment; no
/// cyclized molecules.
pub fn initial_state(cache: &OperatorCache) -> Result<(DVector<f64>, DVector<f64>), SolverError> {
    let n = cache.len();
    let i = cache.basis().find_center(1.0, 0.0).ok_or(SolverError::NoMonomerCenter { x: 1.0, y: 0.0 })?;
    let mut values = DVector::zeros(n);
    values[i] = 1.0;
    let beta = cache.interpolate(&values)?;
    let mu = cache.quadrature().dot(&beta);
    Ok((beta / mu, DVector::zeros(n)))
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub beta: DVector<f64>,
    pub iterations: usize,
    /// Max-norm of the last correction.
    pub residual_norm: f64,
    pub corrections: Vec<f64>,
}

/// One implicit Euler step for the acyclic population, started from the
/// previous state.
pub fn newton_step(
    sys: &AssembledSystem,
    beta_prev: &DVector<f64>,
    tau: f64,
    load: CyclicLoad,
    config: &SolverConfig,
) -> Result<NewtonOutcome, SolverError> {
    let mut beta = beta_prev.clone();
    let mut corrections = Vec::new();
    for it in 1..=config.newton_max_iter {
        let (m, b) = sys.newton_system(&beta, beta_prev, tau, load);
        let h = solve_dense(m, &b).ok_or(SolverError::SingularNewtonMatrix)?;
        beta -= &h;
        let step = h.amax();
        if !step.is_finite() {
            return Err(SolverError::SingularNewtonMatrix);
        }
        corrections.push(step);
        let scale = beta.amax().max(1.0);
        let converged = step <= config.newton_tol * scale;
        // Once corrections stop contracting they are pure round-off.
        let floor = it > 1 && step <= ROUNDOFF_FLOOR * scale && step >= 0.5 * corrections[corrections.len() - 2];
        if converged || floor {
            return Ok(NewtonOutcome { beta, iterations: it, residual_norm: step, corrections });
        }
    }
    Err(SolverError::NonConvergence {
        iterations: config.newton_max_iter,
        last_correction: corrections.last().copied().unwrap_or(f64::NAN),
    })
}

/// Relative correction size below which a stalled Newton sequence counts
/// as converged.
/// Fraction of the conversion cap aimed for when predicting the next step.
const STEP_SAFETY: f64 = 0.9;

pub const ROUNDOFF_FLOOR: f64 = 1e-11;

fn solve_dense(m: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    m.lu().solve(b)
}

/// Implicit update of the cyclized population once the acyclic one is
/// known at the new time.
pub fn advance_f1(
    sys: &AssembledSystem,
    beta0_next: &DVector<f64>,
    beta1_prev: &DVector<f64>,
    tau: f64,
) -> Result<DVector<f64>, SolverError> {
    let n = sys.len();
    if sys.params().lambda == 0.0 && beta1_prev.iter().all(|&v| v == 0.0) {
        return Ok(DVector::zeros(n));
    }
    let mut m = sys.cyclic_operator(beta0_next) * (-tau);
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    let rhs = beta1_prev + sys.cyclic_source(beta0_next) * tau;
    solve_dense(m, &rhs).ok_or(SolverError::SingularCycleUpdate)
}

fn conversion(sys: &AssembledSystem, beta0: &DVector<f64>) -> f64 {
    1.0 - sys.plain_functionals().zeroth.dot(beta0)
}

fn mass(sys: &AssembledSystem, beta0: &DVector<f64>, beta1: &DVector<f64>) -> f64 {
    sys.moments(beta0).acyclic_mass() + sys.moments(beta1).cyclic_mass()
}

/// Adaptive integration from the monomer state to the target conversion.
pub fn integrate(sys: &AssembledSystem, config: &SolverConfig) -> Result<Trajectory, SolverError> {
    config.validate()?;
    let (beta0, beta1) = initial_state(sys.cache())?;
    let mut traj = Trajectory { basis_history: vec![sys.cache().basis().clone()], ..Default::default() };
    let mut state = Snapshot { t: 0.0, conversion: conversion(sys, &beta0), beta0, beta1 };
    traj.snapshots.push(state.clone());
    let mut tau = config.tau_init;

    while state.conversion < config.target_conversion {
        if traj.snapshots.len() + traj.rejected > config.max_steps {
            return Err(SolverError::Stall { tau, t: state.t });
        }
        if !(tau > 0.0) || tau < 1e-16 * state.t {
            return Err(SolverError::Stall { tau, t: state.t });
        }
        let load = sys.cyclic_load(&state.beta1);
        let outcome = match newton_step(sys, &state.beta0, tau, load, config) {
            Ok(o) => o,
            Err(SolverError::NonConvergence { .. }) | Err(SolverError::SingularNewtonMatrix) => {
                traj.rejected += 1;
                tau *= config.tau_shrink;
                continue;
            }
            Err(e) => return Err(e),
        };
        let c_new = conversion(sys, &outcome.beta);
        let gain = c_new - state.conversion;
        if gain > config.max_conversion_step {
            traj.rejected += 1;
            tau *= config.tau_shrink.min(STEP_SAFETY * config.max_conversion_step / gain);
            continue;
        }
        let beta1 = advance_f1(sys, &outcome.beta, &state.beta1, tau)?;
        let m = mass(sys, &outcome.beta, &beta1);
        state = Snapshot { t: state.t + tau, beta0: outcome.beta, beta1, conversion: c_new };
        debug!("t {:.6e} tau {:.3e} c {:.6} newton {} mass {:.9}", state.t, tau, c_new, outcome.iterations, m);
        traj.snapshots.push(state.clone());
        traj.diagnostics.push(StepDiagnostics {
            tau,
            iterations: outcome.iterations,
            corrections: outcome.corrections,
            mass: m,
        });
        if outcome.iterations <= 4 {
            let mut next = tau * config.tau_growth;
            // conversion gain is close to linear in tau over one step
            if gain > 0.0 {
                next = next.min(tau * STEP_SAFETY * config.max_conversion_step / gain).max(tau);
            }
            tau = next;
        }
    }

    let mut wanted: Vec<f64> = config.checkpoints.clone();
    wanted.push(config.target_conversion);
    wanted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    wanted.dedup();
    for c in wanted {
        if let Some(s) = traj.at_conversion(c) {
            traj.checkpoints.push(s);
        }
    }
    Ok(traj)
}

/// Integration with a constant step up to time `t_end` (no conversion
/// cap, failures are errors). Used for convergence-order studies.
pub fn integrate_fixed(
    sys: &AssembledSystem,
    tau: f64,
    t_end: f64,
    config: &SolverConfig,
) -> Result<Trajectory, SolverError> {
    if !(tau > 0.0 && t_end > 0.0) {
        return Err(SolverError::InvalidConfig("tau and t_end must be positive".into()));
    }
    let (beta0, beta1) = initial_state(sys.cache())?;
    let mut traj = Trajectory { basis_history: vec![sys.cache().basis().clone()], ..Default::default() };
    let mut state = Snapshot { t: 0.0, conversion: conversion(sys, &beta0), beta0, beta1 };
    traj.snapshots.push(state.clone());
    let steps = (t_end / tau).round() as usize;
    for k in 1..=steps {
        let load = sys.cyclic_load(&state.beta1);
        let outcome = newton_step(sys, &state.beta0, tau, load, config)?;
        let beta1 = advance_f1(sys, &outcome.beta, &state.beta1, tau)?;
        let m = mass(sys, &outcome.beta, &beta1);
        state = Snapshot { t: k as f64 * tau, conversion: conversion(sys, &outcome.beta), beta0: outcome.beta, beta1 };
        traj.snapshots.push(state.clone());
        traj.diagnostics.push(StepDiagnostics {
            tau,
            iterations: outcome.iterations,
            corrections: outcome.corrections,
            mass: m,
        });
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::GridSpec;
    use crate::kinetics::KineticParams;

    fn system(rho: f64, lambda: f64) -> AssembledSystem {
        let b = GaussianBasis::from_grid(&GridSpec::tiny()).unwrap();
        let cache = Arc::new(OperatorCache::build(Arc::new(b)).unwrap());
        AssembledSystem::new(cache, KineticParams::new(rho, lambda)).unwrap()
    }

    #[test]
    fn monomer_state_moments() {
        let s = system(1.0, 0.0);
        let (b0, b1) = initial_state(s.cache()).unwrap();
        let m = s.moments(&b0);
        assert!((m.mu - 1.0).abs() < 1e-12);
        assert!((m.mu_x - 1.0).abs() < 1e-8);
        assert!(m.mu_y.abs() < 1e-8);
        assert!((m.acyclic_mass() - 1.0).abs() < 1e-8);
        assert_eq!(b1.amax(), 0.0);
    }

    #[test]
    fn missing_monomer_center() {
        let b = GaussianBasis::from_grid(&GridSpec::new(vec![2.0, 3.0], vec![0.0, 1.0], 2.7)).unwrap();
        let cache = OperatorCache::build(Arc::new(b)).unwrap();
        assert!(matches!(initial_state(&cache), Err(SolverError::NoMonomerCenter { .. })));
    }

    #[test]
    fn vanishing_step_is_identity() {
        let s = system(1.0, 0.0);
        let (b0, _) = initial_state(s.cache()).unwrap();
        let o = newton_step(&s, &b0, 1e-300, CyclicLoad::default(), &SolverConfig::default()).unwrap();
        assert_eq!(o.iterations, 1);
        assert!((o.beta - b0).amax() < 1e-14);
    }

    #[test]
    fn no_cycles_without_closure() {
        let s = system(1.0, 0.0);
        let (b0, b1) = initial_state(s.cache()).unwrap();
        assert_eq!(advance_f1(&s, &b0, &b1, 0.1).unwrap().amax(), 0.0);
    }

    #[test]
    fn first_cyclic_step_matches_source() {
        let s = system(1.0, 1e-3);
        let cache = s.cache();
        let i = cache.basis().find_center(3.0, 2.0).unwrap();
        let mut v = DVector::zeros(s.len());
        v[i] = 1.0;
        let b0 = cache.interpolate(&v).unwrap();
        let b1 = DVector::zeros(s.len());
        let tau = 1e-6;
        let next = advance_f1(&s, &b0, &b1, tau).unwrap();
        let got = s.cache().quadrature().dot(&next);
        let m = s.reactive_moments(&b0);
        let expect = tau * 1e-3 * (m.mu_x + m.mu_y);
        assert!((got - expect).abs() < 1e-2 * expect, "{got} {expect}");
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let c = SolverConfig { tol_add: 1e-12, ..Default::default() };
        assert!(c.validate().is_err());
        assert!(SolverConfig::default().with_target(1.0).validate().is_err());
    }
}
