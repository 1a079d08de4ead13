//! Closed moment equations of the ring-free system.
//!
//! ```text
//! d mu   / dt = -K mu (mu_x + rho mu_y)
//! d mu_x / dt = -K mu mu_x
//! d mu_y / dt =  K mu mu_x - rho K mu mu_y
//! ```

use super::dopri::{integrate, Tolerances};
use crate::error::OracleError;
use crate::kinetics::KineticParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentPoint {
    pub t: f64,
    pub conversion: f64,
    pub mu: f64,
    pub mu_x: f64,
    pub mu_y: f64,
}

impl MomentPoint {
    /// `2 mu_x + mu_y - mu`, equal to 1 along the exact flow.
    pub fn mass(&self) -> f64 {
        2.0 * self.mu_x + self.mu_y - self.mu
    }
}

pub const MOMENT_RTOL: f64 = 1e-12;

fn check(params: &KineticParams) -> Result<(), OracleError> {
    if params.lambda != 0.0 {
        return Err(OracleError::CyclizationNotSupported(params.lambda));
    }
    if params.omega != 1.0 || !(params.rate > 0.0) || !(params.rho >= 0.0) {
        return Err(OracleError::InvalidParams(format!(
            "moment closure needs omega = 1 and valid rates, got {params:?}"
        )));
    }
    Ok(())
}

/// Time derivative of `(mu, mu_x, mu_y)`.
pub fn moment_rhs(params: &KineticParams, m: [f64; 3]) -> [f64; 3] {
    let k = params.rate;
    let [mu, mx, my] = m;
    [-k * mu * (mx + params.rho * my), -k * mu * mx, k * mu * mx - params.rho * k * mu * my]
}

/// Moments at the given increasing times.
pub fn moments_at_times(params: &KineticParams, times: &[f64]) -> Result<Vec<MomentPoint>, OracleError> {
    check(params)?;
    let tol = Tolerances { rtol: MOMENT_RTOL, atol: 1e-15 };
    let mut y = [1.0, 1.0, 0.0];
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        integrate(|_, s, d| d.copy_from_slice(&moment_rhs(params, [s[0], s[1], s[2]])), &mut y, t, target, tol)?;
        t = target.max(t);
        out.push(MomentPoint { t, conversion: 1.0 - y[0], mu: y[0], mu_x: y[1], mu_y: y[2] });
    }
    Ok(out)
}

/// Moments at the given increasing conversions, integrating with the
/// conversion as the independent variable.
pub fn moments_at_conversions(params: &KineticParams, conversions: &[f64]) -> Result<Vec<MomentPoint>, OracleError> {
    check(params)?;
    let tol = Tolerances { rtol: MOMENT_RTOL, atol: 1e-15 };
    // state: t, mu_x, mu_y; mu = 1 - c
    let mut y = [0.0, 1.0, 0.0];
    let mut c = 0.0;
    let mut out = Vec::with_capacity(conversions.len());
    for &target in conversions {
        if !(target > 0.0 && target < 1.0) {
            return Err(OracleError::BadTarget(target));
        }
        integrate(
            |c, s, d| {
                let mu = 1.0 - c;
                let r = moment_rhs(params, [mu, s[1], s[2]]);
                let rate = -r[0];
                d[0] = 1.0 / rate;
                d[1] = r[1] / rate;
                d[2] = r[2] / rate;
            },
            &mut y,
            c,
            target,
            tol,
        )?;
        c = target.max(c);
        out.push(MomentPoint { t: y[0], conversion: c, mu: 1.0 - c, mu_x: y[1], mu_y: y[2] });
    }
    Ok(out)
}
