//! Dormand-Prince 5(4) with a PI step controller.

use crate::error::OracleError;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

/// Advances `y` from `t0` to `t1` in place and returns the number of
/// accepted steps.
pub fn integrate<F>(mut f: F, y: &mut [f64], t0: f64, t1: f64, tol: Tolerances) -> Result<usize, OracleError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    if t1 <= t0 {
        return Ok(0);
    }
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut next = vec![0.0; n];

    let mut t = t0;
    f(t, y, &mut k1);
    let norm0 = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let d0 = k1.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut h = if d0 > 0.0 { (0.01 * (norm0.max(tol.atol) / d0)).min(t1 - t0) } else { (t1 - t0) * 1e-3 };
    let mut err_prev = 1e-4f64;
    let mut steps = 0;

    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        if h < 1e-14 * t.abs().max(1e-300) {
            return Err(OracleError::StepUnderflow(t));
        }
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &tmp, &mut k5);
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, &tmp, &mut k6);
        for i in 0..n {
            next[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        f(t + h, &next, &mut k7);

        let mut err = 0.0f64;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(next[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            h *= 0.1;
            continue;
        }
        if err <= 1.0 {
            t += h;
            y.copy_from_slice(&next);
            std::mem::swap(&mut k1, &mut k7);
            steps += 1;
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            h *= fac.clamp(0.2, 5.0);
            err_prev = err.max(1e-4);
        } else {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let mut y = [1.0];
        let tol = Tolerances { rtol: 1e-12, atol: 1e-14 };
        integrate(|_, y, d| d[0] = -y[0], &mut y, 0.0, 3.0, tol).unwrap();
        assert!((y[0] - (-3.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn harmonic_oscillator() {
        let mut y = [1.0, 0.0];
        let tol = Tolerances { rtol: 1e-11, atol: 1e-13 };
        integrate(
            |_, y, d| {
                d[0] = y[1];
                d[1] = -y[0];
            },
            &mut y,
            0.0,
            std::f64::consts::PI,
            tol,
        )
        .unwrap();
        assert!((y[0] + 1.0).abs() < 1e-9);
        assert!(y[1].abs() < 1e-9);
    }
}
