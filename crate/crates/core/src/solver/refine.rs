//! Residual subsampling on tensor grids.
//!
//! Checkpoints sit between neighboring axis values. A checkpoint line is
//! promoted to an axis value when the solution error on it exceeds
//! `tol_add`; an axis value is dropped when every checkpoint on both
//! neighboring lines is below `tol_remove`.

use log::warn;
use nalgebra::DVector;

use crate::basis::{Axis, GaussianBasis, GridSpec, OperatorCache};
use crate::error::BasisError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineConfig {
    pub tol_add: f64,
    pub tol_remove: f64,
    pub max_rounds: usize,
}

impl From<&super::SolverConfig> for RefineConfig {
    fn from(c: &super::SolverConfig) -> Self {
        Self { tol_add: c.tol_add, tol_remove: c.tol_remove, max_rounds: c.max_refine_rounds }
    }
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub grid: GridSpec,
    pub added: Vec<(Axis, f64)>,
    pub removed: Vec<(Axis, f64)>,
    /// Largest relative checkpoint error seen.
    pub max_error: f64,
}

impl RefineOutcome {
    pub fn changed(&self) -> bool {
        !self.added.is_empty() || !self.removed.is_empty()
    }
}

/// Midpoint of two neighbors in the log-index metric (geometric mean, or
/// the arithmetic one next to zero).
pub fn checkpoint_between(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        (a * b).sqrt()
    } else {
        0.5 * (a + b)
    }
}

fn midpoints(axis: &[f64]) -> Vec<f64> {
    axis.windows(2).map(|w| checkpoint_between(w[0], w[1])).collect()
}

/// Grid with every checkpoint promoted, used to compute the reference
/// solution.
pub fn enriched_grid(grid: &GridSpec) -> GridSpec {
    let merge = |axis: &[f64]| {
        let mut v: Vec<f64> = axis.to_vec();
        v.extend(midpoints(axis));
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    };
    GridSpec::new(merge(&grid.x_axis), merge(&grid.y_axis), grid.shape)
}

/// One subsampling pass: compares the coarse solution with a reference at
/// the checkpoints and returns the new grid.
pub fn refine_basis<C, F>(grid: &GridSpec, coarse: C, reference: F, cfg: &RefineConfig) -> RefineOutcome
where
    C: Fn(f64, f64) -> f64,
    F: Fn(f64, f64) -> f64,
{
    let mx = midpoints(&grid.x_axis);
    let my = midpoints(&grid.y_axis);
    let xs: Vec<(f64, Option<usize>)> =
        grid.x_axis.iter().map(|&v| (v, None)).chain(mx.iter().enumerate().map(|(k, &v)| (v, Some(k)))).collect();
    let ys: Vec<(f64, Option<usize>)> =
        grid.y_axis.iter().map(|&v| (v, None)).chain(my.iter().enumerate().map(|(k, &v)| (v, Some(k)))).collect();

    let mut scale = 0.0f64;
    for &(x, _) in &xs {
        for &(y, _) in &ys {
            scale = scale.max(reference(x, y).abs());
        }
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };

    // worst error on each checkpoint line
    let mut line_x = vec![0.0f64; mx.len()];
    let mut line_y = vec![0.0f64; my.len()];
    let mut max_error = 0.0f64;
    for &(x, kx) in &xs {
        for &(y, ky) in &ys {
            if kx.is_none() && ky.is_none() {
                continue;
            }
            let e = (coarse(x, y) - reference(x, y)).abs() / scale;
            max_error = max_error.max(e);
            if let Some(k) = kx {
                line_x[k] = line_x[k].max(e);
            }
            if let Some(k) = ky {
                line_y[k] = line_y[k].max(e);
            }
        }
    }

    let (x_axis, ax, rx) = rebuild(&grid.x_axis, &mx, &line_x, cfg, &[1.0]);
    let (y_axis, ay, ry) = rebuild(&grid.y_axis, &my, &line_y, cfg, &[0.0]);
    let tag = |axis, v: Vec<f64>| v.into_iter().map(move |p| (axis, p));
    RefineOutcome {
        grid: GridSpec::new(x_axis, y_axis, grid.shape),
        added: tag(Axis::X, ax).chain(tag(Axis::Y, ay)).collect(),
        removed: tag(Axis::X, rx).chain(tag(Axis::Y, ry)).collect(),
        max_error,
    }
}

fn rebuild(
    axis: &[f64],
    mids: &[f64],
    line_err: &[f64],
    cfg: &RefineConfig,
    keep: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = axis.len();
    let add: Vec<bool> = line_err.iter().map(|&e| e > cfg.tol_add).collect();
    let mut out = Vec::new();
    let mut added = Vec::new();
    let mut removed = Vec::new();
    for i in 0..n {
        let interior = i > 0 && i + 1 < n;
        let quiet =
            interior && line_err[i - 1] < cfg.tol_remove && line_err[i] < cfg.tol_remove && !keep.contains(&axis[i]);
        if quiet {
            removed.push(axis[i]);
        } else {
            out.push(axis[i]);
        }
        if i < mids.len() && add[i] {
            out.push(mids[i]);
            added.push(mids[i]);
        }
    }
    (out, added, removed)
}

/// Repeats subsampling until the grid stops changing, revisits an earlier
/// grid, or the round limit is reached. `solve` returns the solution on a
/// grid as a pointwise evaluator.
pub fn refine_rounds<S, E>(
    grid: &GridSpec,
    mut solve: S,
    cfg: &RefineConfig,
) -> Result<(GridSpec, Vec<RefineOutcome>), E>
where
    S: FnMut(&GridSpec) -> Result<Box<dyn Fn(f64, f64) -> f64>, E>,
{
    let mut current = grid.clone();
    let mut seen = vec![current.clone()];
    let mut history = Vec::new();
    for _ in 0..cfg.max_rounds {
        let coarse = solve(&current)?;
        let reference = solve(&enriched_grid(&current))?;
        let outcome = refine_basis(&current, &coarse, &reference, cfg);
        let next = outcome.grid.clone();
        let changed = outcome.changed();
        history.push(outcome);
        if !changed {
            return Ok((current, history));
        }
        if seen.contains(&next) {
            warn!("grid refinement is cycling; keeping the current grid");
            return Ok((current, history));
        }
        seen.push(next.clone());
        current = next;
    }
    if cfg.max_rounds > 0 {
        warn!("grid refinement stopped after {} rounds", cfg.max_rounds);
    }
    Ok((current, history))
}

/// Coefficients on a new basis reproducing the old expansion at the new
/// centers.
pub fn remap_coefficients(
    old: &GaussianBasis,
    beta: &DVector<f64>,
    new: &OperatorCache,
) -> Result<DVector<f64>, BasisError> {
    let values =
        DVector::from_iterator(new.len(), new.basis().centers().iter().map(|&(x, y)| old.eval_expansion(beta, x, y)));
    new.interpolate(&values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(add: f64, remove: f64) -> RefineConfig {
        RefineConfig { tol_add: add, tol_remove: remove, max_rounds: 4 }
    }

    #[test]
    fn checkpoint_metric() {
        assert_eq!(checkpoint_between(0.0, 1.0), 0.5);
        assert_eq!(checkpoint_between(4.0, 16.0), 8.0);
    }

    #[test]
    fn identical_solutions_add_nothing() {
        let g = GridSpec::tiny();
        let f = |x: f64, y: f64| (-(x - 2.0).powi(2) - y * y).exp();
        let out = refine_basis(&g, f, f, &cfg(1e-8, 0.0));
        assert!(out.added.is_empty());
        assert!(out.removed.is_empty());
        assert_eq!(out.grid, g);
    }

    #[test]
    fn infinite_add_tolerance_only_removes() {
        let g = GridSpec::tiny();
        let f = |_: f64, _: f64| 1.0;
        let out = refine_basis(&g, f, f, &cfg(f64::INFINITY, 1e-10));
        assert!(out.added.is_empty());
        // interior values other than x = 1 and y = 0 go
        assert_eq!(out.grid.x_axis, vec![1.0, 5.0]);
        assert_eq!(out.grid.y_axis, vec![0.0, 4.0]);
    }

    #[test]
    fn under_resolved_ridge_is_refined() {
        let g = GridSpec::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 2.0, 4.0, 6.0], 2.7);
        let ridge = |_: f64, y: f64| (-8.0 * (y - 3.0).powi(2)).exp();
        let flat = |_: f64, _: f64| 0.0;
        let out = refine_basis(&g, flat, ridge, &cfg(1e-8, 0.0));
        let mid = 8f64.sqrt();
        assert!(out.added.contains(&(Axis::Y, mid)));
        assert!(out.grid.y_axis.contains(&mid));
    }

    #[test]
    fn enriched_contains_all_checkpoints() {
        let e = enriched_grid(&GridSpec::new(vec![1.0, 4.0], vec![0.0, 2.0], 2.7));
        assert_eq!(e.x_axis, vec![1.0, 2.0, 4.0]);
        assert_eq!(e.y_axis, vec![0.0, 1.0, 2.0]);
    }
}
