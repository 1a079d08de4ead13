use std::sync::{Arc, OnceLock};

use nalgebra::DVector;
use proptest::prelude::*;

use hyperbranch::basis::conv::finite_convolution;
use hyperbranch::postprocess::{expected_cycle_length, expected_depth, jacobian, to_db_length, transform_point};
use hyperbranch::quad::{integrate, QuadOptions};
use hyperbranch::{AssembledSystem, CyclicLoad, GaussianBasis, GridSpec, KineticParams, OperatorCache};

fn small_cache() -> &'static Arc<OperatorCache> {
    static CACHE: OnceLock<Arc<OperatorCache>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let xs = (1..=5).map(f64::from).collect();
        let ys = (0..=9).map(f64::from).collect();
        let basis = GaussianBasis::from_grid(&GridSpec::new(xs, ys, 2.7)).unwrap();
        Arc::new(OperatorCache::build(Arc::new(basis)).unwrap())
    })
}

fn coefficients(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-1.0..1.0f64, n).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interpolation_reproduces_center_values(v in coefficients(50)) {
        let cache = small_cache();
        let beta = cache.interpolate(&v).unwrap();
        let back = cache.nodal_values(&beta);
        prop_assert!((back - &v).amax() <= 1e-10 * v.amax().max(1e-300));
    }

    #[test]
    fn gamma_is_symmetric(i in 0usize..50, j in 0usize..50, k in 0usize..50) {
        let cache = small_cache();
        let (a, b) = (cache.gamma(i, j, k), cache.gamma(i, k, j));
        prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(b.abs()).max(1e-300));
    }

    #[test]
    fn convolution_matches_quadrature(
        x in 0.5..30.0f64, a in 0.1..4.0f64, p in 0.0..15.0f64, b in 0.1..4.0f64, q in 0.0..15.0f64,
    ) {
        let closed = finite_convolution(x, a, p, b, q);
        prop_assume!(closed > 1e-100);
        let peak = (a * p + b * (x - q)) / (a + b);
        let opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-13, max_intervals: 4000 };
        let quad = integrate(
            |t| (-a * (t - p).powi(2) - b * (x - t - q).powi(2)).exp(),
            0.0,
            x,
            &[p, x - q, peak],
            opts,
        );
        prop_assert!((closed - quad.value).abs() <= 1e-10 * closed);
    }

    #[test]
    fn jacobian_matches_finite_differences(
        rho in 0.1..10.0f64,
        lambda in 0.0..1e-2f64,
        shielded in any::<bool>(),
        beta in prop::collection::vec(0.0..0.02f64, 50),
        h in coefficients(50),
        mu_x in 0.0..0.1f64,
        mu_y in 0.0..0.1f64,
    ) {
        prop_assume!(h.amax() > 1e-3);
        let omega = if shielded { 2.0 / 3.0 } else { 1.0 };
        let sys = AssembledSystem::new(small_cache().clone(), KineticParams::new(rho, lambda).with_omega(omega)).unwrap();
        let beta = DVector::from_vec(beta);
        let load = CyclicLoad { mu_x, mu_y };
        let jh = sys.jacobian_l0(&beta, load) * &h;
        let eps = 1e-4 * beta.amax().max(1e-3) / h.amax();
        let fd = (sys.apply_l0(&(&beta + &h * eps), load) - sys.apply_l0(&(&beta - &h * eps), load)) / (2.0 * eps);
        prop_assert!((fd - &jh).amax() <= 1e-6 * jh.amax().max(1e-12));
    }

    #[test]
    fn depth_is_symmetric(x in 1u64..2000, frac in 0.0..=1.0f64) {
        let i = (frac * x as f64).floor() as u64;
        prop_assert_eq!(expected_depth(i, x).unwrap().to_bits(), expected_depth(x - i, x).unwrap().to_bits());
    }

    #[test]
    fn linear_closure_halves_ring(x in 2.0..1e7f64, y in 0.0..1e7f64) {
        let t = expected_cycle_length(x, y, 0).unwrap();
        prop_assert_eq!(expected_cycle_length(x, y, 1).unwrap(), t / 2.0);
    }

    #[test]
    fn transform_round_trips(x in 0.01..1e4f64, y in 0.0..1e4f64) {
        let (db, n) = transform_point(x, y);
        let (x2, y2) = to_db_length(db, n).unwrap();
        prop_assert!((x2 - x).abs() <= 1e-9 * x.max(1.0));
        prop_assert!((y2 - y).abs() <= 1e-9 * (x + y).max(1.0));
    }
}

/// A density pushed through the change of variables keeps its integral.
#[test]
fn transform_preserves_integral() {
    let f = |x: f64, y: f64| (-((x - 6.0).powi(2) + (y - 8.0).powi(2)) / 4.0).exp();
    let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 1e-10, max_intervals: 2000 };
    let direct = integrate(|x| integrate(|y| f(x, y), 0.0, 40.0, &[8.0], opts).value, 0.0, 40.0, &[6.0], opts).value;
    let mapped = integrate(
        |n| {
            integrate(
                |db| {
                    let (x, y) = to_db_length(db, n).unwrap();
                    f(x, y) * jacobian(n)
                },
                1e-12,
                1.0,
                &[],
                opts,
            )
            .value
        },
        -1.0 + 1e-12,
        120.0,
        &[19.0],
        opts,
    )
    .value;
    assert!((mapped - direct).abs() <= 1e-7 * direct, "{mapped} vs {direct}");
}
