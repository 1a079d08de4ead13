//! Change of variables from (terminal, linear) counts to
//! (degree of branching, chain length).

use nalgebra::DVector;

use crate::basis::GaussianBasis;
use crate::error::PostError;

/// `(db, n)` of the point `(x, y)`.
pub fn transform_point(x: f64, y: f64) -> (f64, f64) {
    let half = x + 0.5 * y;
    let db = if half > 0.0 { x / half } else { 0.0 };
    (db, 2.0 * x + y - 1.0)
}

/// Inverse map, `(db, n) -> (x, y)`.
pub fn to_db_length(db: f64, n: f64) -> Result<(f64, f64), PostError> {
    if !(db > 0.0 && db <= 1.0 && n > -1.0) || !n.is_finite() {
        return Err(PostError::OutsideImage { db, n });
    }
    let size = n + 1.0;
    Ok((0.5 * size * db, size * (1.0 - db)))
}

/// Absolute Jacobian determinant of the inverse map.
pub fn jacobian(n: f64) -> f64 {
    0.5 * (n + 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldPoint {
    pub db: f64,
    pub n: f64,
    pub x: f64,
    pub y: f64,
    /// Expansion value at `(x, y)`.
    pub value: f64,
    pub jacobian: f64,
    /// `value * jacobian`, the density with respect to `d(db) dn`.
    pub density: f64,
}

/// Field sampled on the tensor grid `db_grid x n_grid`, `db` varying
/// fastest.
pub fn db_length_field(
    basis: &GaussianBasis,
    beta: &DVector<f64>,
    db_grid: &[f64],
    n_grid: &[f64],
) -> Result<Vec<FieldPoint>, PostError> {
    let mut out = Vec::with_capacity(db_grid.len() * n_grid.len());
    for &n in n_grid {
        for &db in db_grid {
            let (x, y) = to_db_length(db, n)?;
            let value = basis.eval_expansion(beta, x, y);
            let jac = jacobian(n);
            out.push(FieldPoint { db, n, x, y, value, jacobian: jac, density: value * jac });
        }
    }
    Ok(out)
}

/// Contour levels `10^-(a + k/2)` for `k = 0..count`.
pub fn level_values(a: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| 10f64.powf(-(a + 0.5 * k as f64))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_image() {
        let (db, n) = transform_point(4.0, 4.0);
        assert!((db - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(n, 11.0);
        let (x, y) = to_db_length(db, n).unwrap();
        assert!((x - 4.0).abs() < 1e-13 && (y - 4.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_outside() {
        assert!(to_db_length(0.0, 5.0).is_err());
        assert!(to_db_length(1.2, 5.0).is_err());
        assert!(to_db_length(0.5, -2.0).is_err());
    }

    #[test]
    fn levels() {
        let l = level_values(2.0, 3);
        assert!((l[0] - 1e-2).abs() < 1e-17);
        assert!((l[1] - 10f64.powf(-2.5)).abs() < 1e-17);
        assert!((l[2] - 1e-3).abs() < 1e-18);
    }
}
