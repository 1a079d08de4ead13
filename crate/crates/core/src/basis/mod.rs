//! Gaussian radial basis on the quarter plane of (terminal, linear) unit counts.
//!
//! Every basis function is a product of two one-dimensional Gaussians,
//!
//! ```text
//! phi_i(x, y) = exp(-sx_i (x - x_i)^2 - sy_i (y - y_i)^2)
//! ```
//!
//! so all integrals needed by the kinetics factor over the two axes.

mod cache;
pub mod conv;

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::BasisError;

pub use cache::{Axis, MomentFunctionals, Moments, OperatorCache};

/// Default shape constant `s` in `sigma = s / spacing^2`.
pub const DEFAULT_SHAPE: f64 = 2.7;

/// Tensor grid description: one list of center coordinates per axis and the
/// shape constant that turns local spacing into a Gaussian width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_axis: Vec<f64>,
    pub y_axis: Vec<f64>,
    pub shape: f64,
}

/// How the exponent of the geometric part of a log grid advances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExponentStep {
    /// k = 2, 3, 4, ... with the last point clamped to the top value.
    Integer,
    /// `count` exponents evenly spread from 2 to log2(top).
    Even { count: usize },
}

impl GridSpec {
    pub fn new(x_axis: Vec<f64>, y_axis: Vec<f64>, shape: f64) -> Self {
        Self { x_axis, y_axis, shape }
    }

    /// 5 x 5 grid around the monomer, mostly for smoke tests.
    pub fn tiny() -> Self {
        Self::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![0.0, 1.0, 2.0, 3.0, 4.0], DEFAULT_SHAPE)
    }

    /// `{1, 2, 3} U {2^k}` on x and the same plus a zero on y, so the monomer
    /// at (1, 0) is a center.
    pub fn log_spaced(top: f64, step: ExponentStep, shape: f64) -> Self {
        let mut x = vec![1.0, 2.0, 3.0];
        let k_top = top.log2();
        match step {
            ExponentStep::Integer => {
                let mut k = 2.0;
                while k < k_top {
                    x.push(2f64.powf(k));
                    k += 1.0;
                }
                if x.last().is_some_and(|&v| v < top) {
                    x.push(top);
                }
            }
            ExponentStep::Even { count } => {
                let count = count.max(1);
                for j in 0..count {
                    let k = if count == 1 { k_top } else { 2.0 + (k_top - 2.0) * j as f64 / (count - 1) as f64 };
                    let v = if j + 1 == count { top } else { 2f64.powf(k) };
                    if v > *x.last().unwrap() {
                        x.push(v);
                    }
                }
            }
        }
        let mut y = Vec::with_capacity(x.len() + 1);
        y.push(0.0);
        y.extend_from_slice(&x);
        Self::new(x, y, shape)
    }

    /// Production grid reaching 1e8 with about 1200 functions.
    pub fn production() -> Self {
        Self::log_spaced(1e8, ExponentStep::Even { count: 31 }, DEFAULT_SHAPE)
    }

    /// Integer-exponent version of the production grid (870 functions).
    pub fn production_integer() -> Self {
        Self::log_spaced(1e8, ExponentStep::Integer, DEFAULT_SHAPE)
    }

    /// Grid of roughly 300 functions used for moderate-conversion runs.
    pub fn reduced() -> Self {
        Self::log_spaced(1e5, ExponentStep::Even { count: 14 }, DEFAULT_SHAPE)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "tiny" => Some(Self::tiny()),
            "reduced" => Some(Self::reduced()),
            "production" => Some(Self::production()),
            "production-integer" => Some(Self::production_integer()),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.x_axis.len() * self.y_axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), BasisError> {
        check_axis("x", &self.x_axis)?;
        check_axis("y", &self.y_axis)?;
        if !(self.shape > 0.0 && self.shape.is_finite()) {
            return Err(BasisError::NonPositiveShape(self.shape));
        }
        Ok(())
    }
}

fn check_axis(name: &'static str, values: &[f64]) -> Result<(), BasisError> {
    if values.is_empty() {
        return Err(BasisError::EmptyAxis(name));
    }
    let mut prev = f64::NEG_INFINITY;
    for &v in values {
        if !v.is_finite() || v < 0.0 || v <= prev {
            return Err(BasisError::BadAxis { axis: name, value: v });
        }
        prev = v;
    }
    Ok(())
}

/// Shape parameters for one axis: `s / d^2` with `d` the gap to the previous
/// value (the next one for the first value, 1 for a lone value).
pub fn axis_shapes(values: &[f64], shape: f64) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let d = if i > 0 {
                values[i] - values[i - 1]
            } else if values.len() > 1 {
                values[1] - values[0]
            } else {
                1.0
            };
            shape / (d * d)
        })
        .collect()
}

/// One-dimensional Gaussian factor shared by several basis functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub center: f64,
    pub shape: f64,
}

impl Atom {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let d = t - self.center;
        (-self.shape * d * d).exp()
    }
}

#[derive(Clone, Debug)]
pub struct GaussianBasis {
    centers: Vec<(f64, f64)>,
    shapes: Vec<(f64, f64)>,
    x_atoms: Vec<Atom>,
    y_atoms: Vec<Atom>,
    atom_index: Vec<(usize, usize)>,
    grid: Option<GridSpec>,
}

impl GaussianBasis {
    /// Tensor basis over the grid, x-major ordering (index = ix * ny + iy).
    pub fn from_grid(spec: &GridSpec) -> Result<Self, BasisError> {
        spec.validate()?;
        let sx = axis_shapes(&spec.x_axis, spec.shape);
        let sy = axis_shapes(&spec.y_axis, spec.shape);
        let mut centers = Vec::with_capacity(spec.len());
        let mut shapes = Vec::with_capacity(spec.len());
        for (i, &x) in spec.x_axis.iter().enumerate() {
            for (j, &y) in spec.y_axis.iter().enumerate() {
                centers.push((x, y));
                shapes.push((sx[i], sy[j]));
            }
        }
        let mut basis = Self::from_centers(centers, shapes)?;
        basis.grid = Some(spec.clone());
        Ok(basis)
    }

    /// Arbitrary scattered centers with per-function shapes.
    pub fn from_centers(centers: Vec<(f64, f64)>, shapes: Vec<(f64, f64)>) -> Result<Self, BasisError> {
        if centers.len() != shapes.len() {
            return Err(BasisError::LengthMismatch { centers: centers.len(), shapes: shapes.len() });
        }
        if centers.is_empty() {
            return Err(BasisError::EmptyAxis("centers"));
        }
        for (index, (&(x, y), &(sx, sy))) in centers.iter().zip(&shapes).enumerate() {
            if !(x >= 0.0 && y >= 0.0 && x.is_finite() && y.is_finite()) {
                return Err(BasisError::NegativeCenter { index, x, y });
            }
            if !(sx > 0.0 && sy > 0.0 && sx.is_finite() && sy.is_finite()) {
                return Err(BasisError::BadShape { index, sx, sy });
            }
        }
        let mut sorted: Vec<(f64, f64)> = centers.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(BasisError::DuplicateCenter { x: w[0].0, y: w[0].1 });
        }

        let mut x_atoms: Vec<Atom> = Vec::new();
        let mut y_atoms: Vec<Atom> = Vec::new();
        let mut atom_index = Vec::with_capacity(centers.len());
        for (&(x, y), &(sx, sy)) in centers.iter().zip(&shapes) {
            let ax = intern(&mut x_atoms, Atom { center: x, shape: sx });
            let ay = intern(&mut y_atoms, Atom { center: y, shape: sy });
            atom_index.push((ax, ay));
        }
        Ok(Self { centers, shapes, x_atoms, y_atoms, atom_index, grid: None })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[(f64, f64)] {
        &self.centers
    }

    pub fn shapes(&self) -> &[(f64, f64)] {
        &self.shapes
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        self.grid.as_ref()
    }

    pub fn x_atoms(&self) -> &[Atom] {
        &self.x_atoms
    }

    pub fn y_atoms(&self) -> &[Atom] {
        &self.y_atoms
    }

    pub fn atom_index(&self) -> &[(usize, usize)] {
        &self.atom_index
    }

    /// Smallest center coordinate on each axis.
    pub fn lower_bounds(&self) -> (f64, f64) {
        self.centers.iter().fold((f64::INFINITY, f64::INFINITY), |(a, b), &(x, y)| (a.min(x), b.min(y)))
    }

    /// Largest center coordinate on each axis.
    pub fn domain_bounds(&self) -> (f64, f64) {
        self.centers.iter().fold((0.0f64, 0.0f64), |(a, b), &(x, y)| (a.max(x), b.max(y)))
    }

    #[inline]
    pub fn phi(&self, j: usize, x: f64, y: f64) -> f64 {
        let (ax, ay) = self.atom_index[j];
        self.x_atoms[ax].eval(x) * self.y_atoms[ay].eval(y)
    }

    /// Values of every basis function at one point.
    pub fn eval_row(&self, x: f64, y: f64) -> Vec<f64> {
        let fx: Vec<f64> = self.x_atoms.iter().map(|a| a.eval(x)).collect();
        let fy: Vec<f64> = self.y_atoms.iter().map(|a| a.eval(y)).collect();
        self.atom_index.iter().map(|&(ax, ay)| fx[ax] * fy[ay]).collect()
    }

    /// Expansion `sum_j beta_j phi_j` at one point.
    pub fn eval_expansion(&self, beta: &DVector<f64>, x: f64, y: f64) -> f64 {
        let fx: Vec<f64> = self.x_atoms.iter().map(|a| a.eval(x)).collect();
        let fy: Vec<f64> = self.y_atoms.iter().map(|a| a.eval(y)).collect();
        self.atom_index.iter().zip(beta.iter()).map(|(&(ax, ay), b)| b * fx[ax] * fy[ay]).sum()
    }

    pub fn find_center(&self, x: f64, y: f64) -> Option<usize> {
        self.centers.iter().position(|&(cx, cy)| (cx - x).abs() < 1e-12 && (cy - y).abs() < 1e-12)
    }

    /// Canonical byte encoding of centers and shapes, used for content hashing.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 32 * self.len());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (&(x, y), &(sx, sy)) in self.centers.iter().zip(&self.shapes) {
            for v in [x, y, sx, sy] {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out
    }
}

fn intern(atoms: &mut Vec<Atom>, atom: Atom) -> usize {
    if let Some(i) = atoms.iter().position(|a| *a == atom) {
        i
    } else {
        atoms.push(atom);
        atoms.len() - 1
    }
}

/// Coefficient vector of one population (acyclic or cyclized) on a basis.
#[derive(Clone, Debug)]
pub struct Distribution2D {
    pub basis: Arc<GaussianBasis>,
    pub beta: DVector<f64>,
    pub cycle_flag: u8,
    pub time: f64,
}

impl Distribution2D {
    pub fn new(basis: Arc<GaussianBasis>, beta: DVector<f64>, cycle_flag: u8, time: f64) -> Result<Self, BasisError> {
        if beta.len() != basis.len() {
            return Err(BasisError::DimensionMismatch { expected: basis.len(), got: beta.len() });
        }
        Ok(Self { basis, beta, cycle_flag, time })
    }

    /// Raw expansion values; may be slightly negative.
    pub fn evaluate(&self, points: &[(f64, f64)]) -> Vec<f64> {
        points.iter().map(|&(x, y)| self.basis.eval_expansion(&self.beta, x, y)).collect()
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.basis.eval_expansion(&self.beta, x, y)
    }
}
