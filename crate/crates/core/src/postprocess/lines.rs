//! One-dimensional distributions obtained by integrating the expansion
//! along families of lines in the (x, y) plane.

use log::info;
use nalgebra::DVector;

use crate::basis::GaussianBasis;
use crate::error::PostError;
use crate::quad::{integrate, QuadOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineKind {
    ChainLength,
    Branching,
    CycleLength,
}

#[derive(Clone, Debug)]
pub struct LineDistribution {
    pub kind: LineKind,
    pub abscissa: Vec<f64>,
    pub acyclic: Vec<f64>,
    pub cyclic: Vec<f64>,
    pub total: Vec<f64>,
    /// Magnitude of negative density removed by flooring, summed over the
    /// grid.
    pub floored: f64,
}

fn opts() -> QuadOptions {
    QuadOptions { abs_tol: 1e-14, rel_tol: 1e-8, max_intervals: 400 }
}

/// Integral of the positive part along a parametrized line, plus the
/// magnitude of the negative part.
fn line_integral<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64]) -> (f64, f64) {
    if b <= a {
        return (0.0, 0.0);
    }
    let pos = integrate(|s| f(s).max(0.0), a, b, breaks, opts()).value;
    let neg = integrate(|s| (-f(s)).max(0.0), a, b, breaks, opts()).value;
    (pos, neg)
}

/// Number of molecules per unit chain length along `2x + y - 1 = n`
/// (acyclic) and `2x + y = n` (cyclized).
pub fn chain_length_distribution(
    basis: &GaussianBasis,
    beta0: &DVector<f64>,
    beta1: &DVector<f64>,
    n_grid: &[f64],
) -> Result<LineDistribution, PostError> {
    let ys: Vec<f64> = basis.y_atoms().iter().map(|a| a.center).collect();
    let xs: Vec<f64> = basis.x_atoms().iter().map(|a| a.center).collect();
    let has_cycles = beta1.iter().any(|&v| v != 0.0);
    let mut out = LineDistribution {
        kind: LineKind::ChainLength,
        abscissa: n_grid.to_vec(),
        acyclic: Vec::with_capacity(n_grid.len()),
        cyclic: Vec::with_capacity(n_grid.len()),
        total: Vec::with_capacity(n_grid.len()),
        floored: 0.0,
    };
    for &n in n_grid {
        if !(n >= 1.0) {
            return Err(PostError::ChainLengthBelowOne(n));
        }
        let mut breaks: Vec<f64> = ys.clone();
        breaks.extend(xs.iter().map(|&x| n + 1.0 - 2.0 * x));
        let (p0, n0) = line_integral(|y| basis.eval_expansion(beta0, 0.5 * (n - y + 1.0), y), 0.0, n - 1.0, &breaks);
        let (p1, n1) = if has_cycles {
            let mut breaks: Vec<f64> = ys.clone();
            breaks.extend(xs.iter().map(|&x| n - 2.0 * x));
            line_integral(|y| basis.eval_expansion(beta1, 0.5 * (n - y), y), 0.0, n - 2.0, &breaks)
        } else {
            (0.0, 0.0)
        };
        out.acyclic.push(0.5 * p0);
        out.cyclic.push(0.5 * p1);
        out.total.push(0.5 * (p0 + p1));
        out.floored += 0.5 * (n0 + n1);
    }
    if out.floored > 0.0 {
        info!("chain-length distribution: floored {:.3e} of negative density", out.floored);
    }
    Ok(out)
}

/// Chain-length weighted density along `y = 2 (1 - b) x / b`, the set of
/// points with degree of branching `b`.
pub fn branching_distribution(
    basis: &GaussianBasis,
    beta0: &DVector<f64>,
    beta1: &DVector<f64>,
    b_grid: &[f64],
) -> Result<LineDistribution, PostError> {
    let (x_top, y_top) = basis.domain_bounds();
    let xs: Vec<f64> = basis.x_atoms().iter().map(|a| a.center).collect();
    let ys: Vec<f64> = basis.y_atoms().iter().map(|a| a.center).collect();
    let has_cycles = beta1.iter().any(|&v| v != 0.0);
    let mut out = LineDistribution {
        kind: LineKind::Branching,
        abscissa: b_grid.to_vec(),
        acyclic: Vec::with_capacity(b_grid.len()),
        cyclic: Vec::with_capacity(b_grid.len()),
        total: Vec::with_capacity(b_grid.len()),
        floored: 0.0,
    };
    for &b in b_grid {
        if !(b > 0.0 && b <= 1.0) {
            return Err(PostError::BranchingOutOfRange(b));
        }
        let slope = 2.0 * (1.0 - b) / b;
        let x_end = if slope > 0.0 { x_top.min(y_top / slope) } else { x_top };
        let mut breaks = xs.clone();
        if slope > 0.0 {
            breaks.extend(ys.iter().map(|&y| y / slope));
        }
        let weight = |x: f64| 2.0 * x + slope * x;
        let (p0, n0) = line_integral(|x| weight(x) * basis.eval_expansion(beta0, x, slope * x), 0.0, x_end, &breaks);
        let (p1, n1) = if has_cycles {
            line_integral(|x| weight(x) * basis.eval_expansion(beta1, x, slope * x), 0.0, x_end, &breaks)
        } else {
            (0.0, 0.0)
        };
        out.acyclic.push(p0);
        out.cyclic.push(p1);
        out.total.push(p0 + p1);
        out.floored += n0 + n1;
    }
    Ok(out)
}

/// Mean of the abscissa weighted by a sampled density (trapezoid rule).
pub fn weighted_mean(abscissa: &[f64], density: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 1..abscissa.len() {
        let h = abscissa[k] - abscissa[k - 1];
        num += 0.5 * h * (abscissa[k] * density[k] + abscissa[k - 1] * density[k - 1]);
        den += 0.5 * h * (density[k] + density[k - 1]);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::GridSpec;

    #[test]
    fn rejects_bad_abscissae() {
        let b = GaussianBasis::from_grid(&GridSpec::tiny()).unwrap();
        let z = DVector::zeros(b.len());
        assert!(matches!(chain_length_distribution(&b, &z, &z, &[0.5]), Err(PostError::ChainLengthBelowOne(_))));
        assert!(matches!(branching_distribution(&b, &z, &z, &[0.0]), Err(PostError::BranchingOutOfRange(_))));
    }

    #[test]
    fn single_bump_branching_peak() {
        // a narrow bump at (x0, y0) puts the branching density near
        // x0 / (x0 + y0 / 2)
        let centers: Vec<(f64, f64)> = vec![(6.0, 4.0)];
        let b = GaussianBasis::from_centers(centers, vec![(40.0, 40.0)]).unwrap();
        let beta = DVector::from_element(1, 1.0);
        let z = DVector::zeros(1);
        let grid: Vec<f64> = (1..=99).map(|k| k as f64 / 100.0).collect();
        let d = branching_distribution(&b, &beta, &z, &grid).unwrap();
        let k = d.total.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
        assert!((grid[k] - 0.75).abs() <= 0.011, "{}", grid[k]);
    }

    #[test]
    fn mean_of_flat_density() {
        let x = [0.0, 1.0, 2.0];
        assert!((weighted_mean(&x, &[1.0, 1.0, 1.0]) - 1.0).abs() < 1e-15);
    }
}
