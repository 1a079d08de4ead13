use std::sync::{Arc, OnceLock};

use log::warn;
use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::conv::{finite_convolution, half_line_integral};
use super::{Atom, GaussianBasis};
use crate::error::BasisError;

/// Reciprocal condition below which the interpolation matrix is refused.
pub const RCOND_REFUSE: f64 = 1e-14;
/// Reciprocal condition below which a warning is logged.
pub const RCOND_WARN: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Table `g[p][a][b] = int_0^{x_p} atom_a(t) atom_b(x_p - t) dt` over the
/// atoms of one axis.
#[derive(Clone, Debug)]
struct ConvTable {
    m: usize,
    v: Vec<f64>,
}

impl ConvTable {
    fn build(atoms: &[Atom]) -> Self {
        let m = atoms.len();
        let mut v = vec![0.0; m * m * m];
        for (p, at) in atoms.iter().enumerate() {
            for a in 0..m {
                for b in a..m {
                    let g =
                        finite_convolution(at.center, atoms[a].shape, atoms[a].center, atoms[b].shape, atoms[b].center);
                    v[(p * m + a) * m + b] = g;
                    v[(p * m + b) * m + a] = g;
                }
            }
        }
        Self { m, v }
    }

    #[inline]
    fn get(&self, p: usize, a: usize, b: usize) -> f64 {
        self.v[(p * self.m + a) * self.m + b]
    }

    #[inline]
    fn row(&self, p: usize, a: usize) -> &[f64] {
        let s = (p * self.m + a) * self.m;
        &self.v[s..s + self.m]
    }
}

/// Everything about a basis that does not depend on the solution:
/// interpolation matrix and its inverse, quadrature weights and the
/// factorized convolution tensor.
#[derive(Debug)]
pub struct OperatorCache {
    basis: Arc<GaussianBasis>,
    interp: DMatrix<f64>,
    inverse: DMatrix<f64>,
    lu: OnceLock<LU<f64, Dyn, Dyn>>,
    rcond: f64,
    quad: DVector<f64>,
    x_table: ConvTable,
    y_table: ConvTable,
}

impl OperatorCache {
    pub fn build(basis: Arc<GaussianBasis>) -> Result<Self, BasisError> {
        let n = basis.len();
        let interp = DMatrix::from_fn(n, n, |i, j| {
            let (x, y) = basis.centers()[i];
            basis.phi(j, x, y)
        });
        let lu = interp.clone().lu();
        let inverse = lu.try_inverse().ok_or(BasisError::SingularInterpolation { rcond: 0.0 })?;
        Self::assemble(basis, interp, inverse, Some(lu))
    }

    /// Rebuild from a stored interpolation matrix and inverse; the
    /// factorization is recomputed on first use.
    pub fn from_parts(
        basis: Arc<GaussianBasis>,
        interp: DMatrix<f64>,
        inverse: DMatrix<f64>,
    ) -> Result<Self, BasisError> {
        let n = basis.len();
        for m in [&interp, &inverse] {
            if m.nrows() != n || m.ncols() != n {
                return Err(BasisError::DimensionMismatch { expected: n, got: m.nrows() });
            }
        }
        Self::assemble(basis, interp, inverse, None)
    }

    fn assemble(
        basis: Arc<GaussianBasis>,
        interp: DMatrix<f64>,
        inverse: DMatrix<f64>,
        lu: Option<LU<f64, Dyn, Dyn>>,
    ) -> Result<Self, BasisError> {
        let rcond = 1.0 / (norm1(&interp) * norm1(&inverse));
        if !(rcond >= RCOND_REFUSE) {
            return Err(BasisError::SingularInterpolation { rcond });
        }
        if rcond < RCOND_WARN {
            warn!("interpolation matrix is poorly conditioned (rcond {rcond:e})");
        }
        let quad = DVector::from_iterator(
            basis.len(),
            basis
                .centers()
                .iter()
                .zip(basis.shapes())
                .map(|(&(x, y), &(sx, sy))| half_line_integral(sx, x) * half_line_integral(sy, y)),
        );
        let x_table = ConvTable::build(basis.x_atoms());
        let y_table = ConvTable::build(basis.y_atoms());
        let cell = OnceLock::new();
        if let Some(lu) = lu {
            let _ = cell.set(lu);
        }
        Ok(Self { basis, interp, inverse, lu: cell, rcond, quad, x_table, y_table })
    }

    pub fn basis(&self) -> &Arc<GaussianBasis> {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// `A[i][j] = phi_j(center_i)`.
    pub fn interpolation(&self) -> &DMatrix<f64> {
        &self.interp
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Reciprocal 1-norm condition number of the interpolation matrix.
    pub fn condition_estimate(&self) -> f64 {
        self.rcond
    }

    fn lu(&self) -> &LU<f64, Dyn, Dyn> {
        self.lu.get_or_init(|| self.interp.clone().lu())
    }

    /// `q[i] = integral of phi_i over the quarter plane`.
    pub fn quadrature(&self) -> &DVector<f64> {
        &self.quad
    }

    /// Coefficients whose expansion takes `values` at the centers.
    pub fn interpolate(&self, values: &DVector<f64>) -> Result<DVector<f64>, BasisError> {
        self.check_len(values.len())?;
        self.lu().solve(values).ok_or(BasisError::SingularInterpolation { rcond: self.rcond })
    }

    /// Solves `A X = rhs`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>, BasisError> {
        self.check_len(rhs.nrows())?;
        self.lu().solve(rhs).ok_or(BasisError::SingularInterpolation { rcond: self.rcond })
    }

    /// Values of the expansion at the centers, `A beta`.
    pub fn nodal_values(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.interp * beta
    }

    /// Coefficient-space translation by `(xs, ys)`: the expansion of
    /// `f(x - xs, y - ys)`. Rows whose source point falls below the lowest
    /// center on either axis are zero, so nothing enters from outside.
    pub fn shift_matrix(&self, xs: f64, ys: f64) -> Result<DMatrix<f64>, BasisError> {
        let n = self.len();
        let (lo_x, lo_y) = self.basis.lower_bounds();
        let centers = self.basis.centers();
        let shifted = DMatrix::from_fn(n, n, |i, j| {
            let px = centers[i].0 - xs;
            let py = centers[i].1 - ys;
            if px < lo_x - 1e-12 || py < lo_y - 1e-12 {
                0.0
            } else {
                self.basis.phi(j, px, py)
            }
        });
        self.solve(&shifted)
    }

    /// Coefficient-space multiplication by `w^omega` with `w` the chosen
    /// coordinate (0^omega taken as 0).
    pub fn weight_matrix(&self, axis: Axis, omega: f64) -> Result<DMatrix<f64>, BasisError> {
        let w = self.weights(axis, omega);
        let mut scaled = self.interp.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= w[i];
        }
        self.solve(&scaled)
    }

    pub fn weights(&self, axis: Axis, omega: f64) -> Vec<f64> {
        self.basis
            .centers()
            .iter()
            .map(|&(x, y)| {
                let c = match axis {
                    Axis::X => x,
                    Axis::Y => y,
                };
                if omega == 1.0 {
                    c
                } else if c <= 0.0 {
                    0.0
                } else {
                    c.powf(omega)
                }
            })
            .collect()
    }

    /// `Gamma[i][j][k] = (phi_j * phi_k)(center_i)` on the quarter plane.
    pub fn gamma(&self, i: usize, j: usize, k: usize) -> f64 {
        let ai = self.basis.atom_index();
        let (pi_x, pi_y) = ai[i];
        let (jx, jy) = ai[j];
        let (kx, ky) = ai[k];
        self.x_table.get(pi_x, jx, kx) * self.y_table.get(pi_y, jy, ky)
    }

    /// `C[i][j] = sum_k beta_k Gamma[i][j][k]` (before applying `A^-1`).
    pub fn convolution_values(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let n = self.len();
        let ai = self.basis.atom_index();
        let mx = self.x_table.m;
        let my = self.y_table.m;
        // h[(py * my + ayj) * mx + ax] = sum over k with x-atom ax of
        // beta_k * gy[py][ayj][ay_k]
        let mut h = vec![0.0; my * my * mx];
        for (k, &(ax, ay)) in ai.iter().enumerate() {
            let b = beta[k];
            if b == 0.0 {
                continue;
            }
            for py in 0..my {
                for ayj in 0..my {
                    h[(py * my + ayj) * mx + ax] += b * self.y_table.get(py, ayj, ay);
                }
            }
        }
        let mut c = DMatrix::zeros(n, n);
        for j in 0..n {
            let (axj, ayj) = ai[j];
            let mut col = c.column_mut(j);
            for i in 0..n {
                let (px, py) = ai[i];
                let g = self.x_table.row(px, axj);
                let s = (py * my + ayj) * mx;
                let hrow = &h[s..s + mx];
                col[i] = g.iter().zip(hrow).map(|(a, b)| a * b).sum();
            }
        }
        c
    }

    /// `C_beta = A^-1 C`.
    pub fn convolution_matrix(&self, beta: &DVector<f64>) -> Result<DMatrix<f64>, BasisError> {
        self.check_len(beta.len())?;
        Ok(&self.inverse * self.convolution_values(beta))
    }

    /// Moment functionals: mu = q.beta, mu_x = q.Tx beta, mu_y = q.Ty beta.
    pub fn moment_functionals(&self, omega: f64) -> MomentFunctionals {
        // q^T A^-1 diag(w) A = (A^T diag(w) A^-T q)^T
        let nodal = self.inverse.transpose() * &self.quad;
        let along = |axis| {
            let w = self.weights(axis, omega);
            let scaled = DVector::from_iterator(nodal.len(), nodal.iter().zip(&w).map(|(a, b)| a * b));
            self.interp.transpose() * scaled
        };
        MomentFunctionals { zeroth: self.quad.clone(), x: along(Axis::X), y: along(Axis::Y) }
    }

    fn check_len(&self, got: usize) -> Result<(), BasisError> {
        if got != self.len() {
            Err(BasisError::DimensionMismatch { expected: self.len(), got })
        } else {
            Ok(())
        }
    }
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Linear functionals returning the zeroth and first partial moments of an
/// expansion.
#[derive(Clone, Debug)]
pub struct MomentFunctionals {
    pub zeroth: DVector<f64>,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub mu: f64,
    pub mu_x: f64,
    pub mu_y: f64,
}

impl Moments {
    /// Monomer-unit count carried by an acyclic population, `2 mu_x + mu_y - mu`.
    pub fn acyclic_mass(&self) -> f64 {
        2.0 * self.mu_x + self.mu_y - self.mu
    }

    /// Monomer-unit count carried by a cyclized population, `2 mu_x + mu_y`.
    pub fn cyclic_mass(&self) -> f64 {
        2.0 * self.mu_x + self.mu_y
    }
}

impl MomentFunctionals {
    pub fn apply(&self, beta: &DVector<f64>) -> Moments {
        Moments { mu: self.zeroth.dot(beta), mu_x: self.x.dot(beta), mu_y: self.y.dot(beta) }
    }
}
