//! Closed forms for one-dimensional Gaussian integrals on the half line.

use std::f64::consts::PI;

use libm::{erf, erfc};

/// Values below this are flushed to zero.
pub const FLUSH: f64 = 1e-300;

/// `int_0^x exp(-a (t - p)^2) exp(-b (x - t - q)^2) dt` for `x >= 0`.
///
/// Zero for negative `x`: both factors live on the half line.
pub fn finite_convolution(x: f64, a: f64, p: f64, b: f64, q: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let s = a + b;
    let d = x - p - q;
    let pref = (PI / s).sqrt() * (-(a * b / s) * d * d).exp();
    if pref < FLUSH {
        return 0.0;
    }
    let rs = s.sqrt();
    let peak = (a * p + b * (x - q)) / s;
    let u = rs * (x - peak);
    let v = rs * peak;
    // u + v = sqrt(s) x >= 0, so at most one of them is negative; the
    // complementary form keeps digits when the bracket is a small difference.
    let bracket = if u < 0.0 {
        erfc(-u) - erfc(v)
    } else if v < 0.0 {
        erfc(-v) - erfc(u)
    } else {
        erf(u) + erf(v)
    };
    let out = pref * 0.5 * bracket;
    if out.abs() < FLUSH {
        0.0
    } else {
        out
    }
}

/// Same integral over the whole line.
pub fn full_line_convolution(x: f64, a: f64, p: f64, b: f64, q: f64) -> f64 {
    let s = a + b;
    let d = x - p - q;
    (PI / s).sqrt() * (-(a * b / s) * d * d).exp()
}

/// `int_0^inf exp(-a (t - c)^2) dt`.
pub fn half_line_integral(a: f64, c: f64) -> f64 {
    (PI / a).sqrt() * 0.5 * erfc(-a.sqrt() * c)
}
