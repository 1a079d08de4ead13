//! Reaction operators of AB2 step growth in coefficient space.
//!
//! A molecule is described by its terminal-unit count `x` and linear-unit
//! count `y`; `f0` holds acyclic molecules (one free A group each) and `f1`
//! cyclized ones (no free A group). Unit counts are turned into reactive
//! group counts through `x^omega`, `y^omega`.
//!
//! Channels, all with rate scale `K`:
//!
//! ```text
//! A + terminal B   (x, y) + (x', y') -> (x + x' - 1, y + y' + 1)   rate x
//! A + linear B     (x, y) + (x', y') -> (x + x', y + y' - 1)       rate rho y
//! ring closure on a terminal B: (x, y) -> cyclized (x - 1, y + 1)  rate lambda x
//! ring closure on a linear B:   (x, y) -> cyclized (x, y - 1)      rate lambda rho y
//! ```

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{Axis, MomentFunctionals, Moments, OperatorCache};
use crate::error::SolverError;

/// Translation mapping the raw convolution onto the product of a terminal
/// B reaction: the product at (x, y) reads the convolution at (x + 1, y - 1).
pub const TERMINAL_SHIFT: (f64, f64) = (-1.0, 1.0);
/// Same for a linear B reaction: reads the convolution at (x, y + 1).
pub const LINEAR_SHIFT: (f64, f64) = (0.0, -1.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KineticParams {
    /// Reactivity of a linear-unit B relative to a terminal-unit B.
    pub rho: f64,
    /// Ring-closure rate relative to intermolecular reaction.
    pub lambda: f64,
    /// Overall rate constant.
    #[serde(default = "one")]
    pub rate: f64,
    /// Exponent mapping unit counts to accessible group counts.
    #[serde(default = "one")]
    pub omega: f64,
}

fn one() -> f64 {
    1.0
}

impl KineticParams {
    pub fn new(rho: f64, lambda: f64) -> Self {
        Self { rho, lambda, rate: 1.0, omega: 1.0 }
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let ok = self.rho >= 0.0
            && self.lambda >= 0.0
            && self.rate > 0.0
            && self.omega > 0.0
            && self.omega <= 1.0
            && [self.rho, self.lambda, self.rate, self.omega].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SolverError::InvalidParams(format!("{self:?}")))
        }
    }
}

/// Accessible B groups carried by the cyclized population, seen by the
/// free A groups of the acyclic one.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CyclicLoad {
    pub mu_x: f64,
    pub mu_y: f64,
}

/// Kinetic parameters bound to the constant matrices of one basis.
pub struct AssembledSystem {
    params: KineticParams,
    cache: Arc<OperatorCache>,
    tx: DMatrix<f64>,
    ty: DMatrix<f64>,
    terminal_shift: DMatrix<f64>,
    linear_shift: DMatrix<f64>,
    // shift times A^-1, applied to raw convolution values
    terminal_pre: DMatrix<f64>,
    linear_pre: DMatrix<f64>,
    reactive: MomentFunctionals,
    plain: MomentFunctionals,
}

impl AssembledSystem {
    pub fn new(cache: Arc<OperatorCache>, params: KineticParams) -> Result<Self, SolverError> {
        params.validate()?;
        let tx = cache.weight_matrix(Axis::X, params.omega)?;
        let ty = cache.weight_matrix(Axis::Y, params.omega)?;
        let terminal_shift = cache.shift_matrix(TERMINAL_SHIFT.0, TERMINAL_SHIFT.1)?;
        let linear_shift = cache.shift_matrix(LINEAR_SHIFT.0, LINEAR_SHIFT.1)?;
        let terminal_pre = &terminal_shift * cache.inverse();
        let linear_pre = &linear_shift * cache.inverse();
        let reactive = cache.moment_functionals(params.omega);
        let plain = if params.omega == 1.0 { reactive.clone() } else { cache.moment_functionals(1.0) };
        Ok(Self { params, cache, tx, ty, terminal_shift, linear_shift, terminal_pre, linear_pre, reactive, plain })
    }

    pub fn params(&self) -> &KineticParams {
        &self.params
    }

    pub fn cache(&self) -> &Arc<OperatorCache> {
        &self.cache
    }

    pub fn len(&self) -> usize {
        self.cache.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cache.is_empty()
    }

    /// Weight matrices in use (already raised to omega).
    pub fn weights(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        (&self.tx, &self.ty)
    }

    pub fn shifts(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        (&self.terminal_shift, &self.linear_shift)
    }

    /// Unit-count moments (omega = 1).
    pub fn moments(&self, beta: &DVector<f64>) -> Moments {
        self.plain.apply(beta)
    }

    /// Reactive-group moments (omega applied).
    pub fn reactive_moments(&self, beta: &DVector<f64>) -> Moments {
        self.reactive.apply(beta)
    }

    pub fn plain_functionals(&self) -> &MomentFunctionals {
        &self.plain
    }

    pub fn reactive_functionals(&self) -> &MomentFunctionals {
        &self.reactive
    }

    pub fn cyclic_load(&self, beta1: &DVector<f64>) -> CyclicLoad {
        let m = self.reactive.apply(beta1);
        CyclicLoad { mu_x: m.mu_x, mu_y: m.mu_y }
    }

    /// Right-hand side of the acyclic population balance.
    pub fn apply_l0(&self, beta: &DVector<f64>, load: CyclicLoad) -> DVector<f64> {
        let KineticParams { rho, lambda, rate, .. } = self.params;
        let conv = self.cache.convolution_values(beta);
        let txb = &self.tx * beta;
        let tyb = &self.ty * beta;
        let m = self.reactive.apply(beta);
        let mx = m.mu_x + load.mu_x;
        let my = m.mu_y + load.mu_y;

        let mut out = &self.terminal_pre * (&conv * &txb);
        out.axpy(-mx, beta, 1.0);
        out.axpy(-(m.mu + lambda), &txb, 1.0);
        out *= rate;
        if rho != 0.0 {
            let mut lin = &self.linear_pre * (&conv * &tyb);
            lin.axpy(-my, beta, 1.0);
            lin.axpy(-(m.mu + lambda), &tyb, 1.0);
            out.axpy(rho * rate, &lin, 1.0);
        }
        out
    }

    /// Exact derivative of [`apply_l0`](Self::apply_l0) with respect to
    /// `beta` (the cyclic load is held fixed).
    pub fn jacobian_l0(&self, beta: &DVector<f64>, load: CyclicLoad) -> DMatrix<f64> {
        let KineticParams { rho, lambda, rate, .. } = self.params;
        let n = self.len();
        let conv = self.cache.convolution_values(beta);
        let m = self.reactive.apply(beta);
        let q = &self.reactive.zeroth;

        let part = |weight: &DMatrix<f64>, pre: &DMatrix<f64>, qw: &DVector<f64>, load_w: f64, mw: f64| {
            let wb = weight * beta;
            let mut inner = &conv * weight;
            inner += self.cache.convolution_values(&wb);
            let mut j = pre * inner;
            for i in 0..n {
                j[(i, i)] -= mw + load_w;
            }
            j.ger(-1.0, beta, qw, 1.0);
            j -= weight * (m.mu + lambda);
            j.ger(-1.0, &wb, q, 1.0);
            j
        };
        let mut jac = part(&self.tx, &self.terminal_pre, &self.reactive.x, load.mu_x, m.mu_x);
        jac *= rate;
        if rho != 0.0 {
            let lin = part(&self.ty, &self.linear_pre, &self.reactive.y, load.mu_y, m.mu_y);
            jac += lin * (rho * rate);
        }
        jac
    }

    /// Matrix of the cyclized balance, linear in `beta1` for fixed `beta0`.
    pub fn cyclic_operator(&self, beta0: &DVector<f64>) -> DMatrix<f64> {
        let KineticParams { rho, rate, .. } = self.params;
        let conv = self.cache.convolution_values(beta0);
        let mu0 = self.reactive.zeroth.dot(beta0);
        let mut m = &self.terminal_pre * (&conv * &self.tx);
        m -= &self.tx * mu0;
        m *= rate;
        if rho != 0.0 {
            let mut lin = &self.linear_pre * (&conv * &self.ty);
            lin -= &self.ty * mu0;
            m += lin * (rho * rate);
        }
        m
    }

    /// Ring-closure source feeding the cyclized population.
    pub fn cyclic_source(&self, beta0: &DVector<f64>) -> DVector<f64> {
        let KineticParams { rho, lambda, rate, .. } = self.params;
        if lambda == 0.0 {
            return DVector::zeros(self.len());
        }
        let mut s = &self.terminal_shift * (&self.tx * beta0);
        if rho != 0.0 {
            s.axpy(rho, &(&self.linear_shift * (&self.ty * beta0)), 1.0);
        }
        s * (lambda * rate)
    }

    /// Right-hand side of the cyclized population balance.
    pub fn apply_l1(&self, beta0: &DVector<f64>, beta1: &DVector<f64>) -> DVector<f64> {
        let KineticParams { rho, rate, .. } = self.params;
        let conv = self.cache.convolution_values(beta0);
        let mu0 = self.reactive.zeroth.dot(beta0);
        let txb = &self.tx * beta1;
        let tyb = &self.ty * beta1;
        let mut out = &self.terminal_pre * (&conv * &txb);
        out.axpy(-mu0, &txb, 1.0);
        out *= rate;
        if rho != 0.0 {
            let mut lin = &self.linear_pre * (&conv * &tyb);
            lin.axpy(-mu0, &tyb, 1.0);
            out.axpy(rho * rate, &lin, 1.0);
        }
        out + self.cyclic_source(beta0)
    }

    /// Newton matrix `tau J - I` and residual `tau L(beta) - beta + beta_prev`
    /// of one implicit Euler step.
    pub fn newton_system(
        &self,
        beta: &DVector<f64>,
        beta_prev: &DVector<f64>,
        tau: f64,
        load: CyclicLoad,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.len();
        let mut m = self.jacobian_l0(beta, load) * tau;
        for i in 0..n {
            m[(i, i)] -= 1.0;
        }
        let mut b = self.apply_l0(beta, load) * tau;
        b -= beta;
        b += beta_prev;
        (m, b)
    }
}
