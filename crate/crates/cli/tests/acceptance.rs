//! Acceptance criteria 1 to 11.
//!
//! Prints one verdict line per criterion (with indented detail lines above
//! it) and exits nonzero when any criterion fails. Set
//! `ACCEPTANCE_ONLY=4,5` to run a subset.

use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use hyperbranch::basis::conv::finite_convolution;
use hyperbranch::basis::{GridSpec, DEFAULT_SHAPE};
use hyperbranch::oracle::{
    master_equation_run, moments_at_conversions, moments_at_times, Coupling, MasterOptions, MasterState, LEAK_GATE,
};
use hyperbranch::postprocess::{
    chain_length_distribution, cycle_length_distribution, expected_cycle_length, expected_depth, median, scalars_of,
    CycleDistribution, ScalarRow,
};
use hyperbranch::quad::{integrate as quadrature, QuadOptions};
use hyperbranch::solver::{integrate_fixed, Snapshot};
use hyperbranch::{
    integrate, AssembledSystem, CyclicLoad, GaussianBasis, KineticParams, OperatorCache, SolverConfig, Trajectory,
};
use hyperbranch_cli::commands::{cmd_post, cmd_run};
use hyperbranch_cli::config::{BranchingGrid, ChainLengthGrid, CycleGrid, DbLengthGrid, LevelSet};
use hyperbranch_cli::RunConfig;

const RHOS: [f64; 3] = [0.1, 1.0, 10.0];
const CHECKPOINTS: [f64; 2] = [0.9, 0.99];

type Check = Box<dyn Fn(&mut Lab) -> Verdict>;

struct Verdict {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

struct SolverRun {
    sys: AssembledSystem,
    traj: Result<Trajectory, String>,
    elapsed: Duration,
}

impl SolverRun {
    fn at(&self, c: f64) -> Option<&Snapshot> {
        self.traj.as_ref().ok()?.checkpoint(c)
    }

    fn scalars(&self, c: f64) -> Option<ScalarRow> {
        self.at(c).map(|s| scalars_of(self.sys.plain_functionals(), s))
    }
}

struct OracleRun {
    states: Result<Vec<MasterState>, String>,
    elapsed: Duration,
}

impl OracleRun {
    fn at(&self, c: f64) -> Option<&MasterState> {
        self.states.as_ref().ok()?.iter().find(|s| (s.conversion - c).abs() < 1e-12)
    }
}

/// Shared solver and oracle runs, computed on first use.
struct Lab {
    reduced: Arc<OperatorCache>,
    runs: HashMap<String, Rc<SolverRun>>,
    oracles: HashMap<String, Rc<OracleRun>>,
}

impl Lab {
    fn new() -> Self {
        let basis = GaussianBasis::from_grid(&GridSpec::reduced()).expect("reduced grid");
        let reduced = Arc::new(OperatorCache::build(Arc::new(basis)).expect("reduced cache"));
        Self { reduced, runs: HashMap::new(), oracles: HashMap::new() }
    }

    fn solver(&mut self, rho: f64, lambda: f64, omega: f64) -> Rc<SolverRun> {
        let key = format!("{rho:?}/{lambda:?}/{omega:?}");
        if let Some(r) = self.runs.get(&key) {
            return r.clone();
        }
        let params = KineticParams::new(rho, lambda).with_omega(omega);
        let sys = AssembledSystem::new(self.reduced.clone(), params).expect("valid params");
        let cfg = SolverConfig { checkpoints: CHECKPOINTS.to_vec(), ..SolverConfig::default() }.with_target(0.99);
        let start = Instant::now();
        let traj = integrate(&sys, &cfg).map_err(|e| e.to_string());
        let run = Rc::new(SolverRun { sys, traj, elapsed: start.elapsed() });
        self.runs.insert(key, run.clone());
        run
    }

    fn oracle(&mut self, rho: f64, lambda: f64, omega: f64, coupling: Coupling) -> Rc<OracleRun> {
        let key = format!("{rho:?}/{lambda:?}/{omega:?}/{coupling:?}");
        if let Some(r) = self.oracles.get(&key) {
            return r.clone();
        }
        let params = KineticParams::new(rho, lambda).with_omega(omega);
        let opts = MasterOptions { coupling, ..MasterOptions::default() };
        let start = Instant::now();
        // a truncated lattice can stall before the last target; keep the earlier one
        let states = master_equation_run(&params, 25, 50, &CHECKPOINTS, opts)
            .or_else(|_| master_equation_run(&params, 25, 50, &CHECKPOINTS[..1], opts))
            .map_err(|e| e.to_string());
        let run = Rc::new(OracleRun { states, elapsed: start.elapsed() });
        self.oracles.insert(key, run.clone());
        run
    }

    /// Reference lattice run: coupled to the exact moments when the model
    /// allows it, so that truncation does not distort consumption.
    fn reference(&mut self, rho: f64, lambda: f64) -> Rc<OracleRun> {
        let coupling = if lambda == 0.0 { Coupling::ExactMoments } else { Coupling::Truncated };
        self.oracle(rho, lambda, 1.0, coupling)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn moment_oracle_equivalence(lab: &mut Lab) -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for rho in RHOS {
        let run = lab.solver(rho, 0.0, 1.0);
        let traj = match &run.traj {
            Ok(t) => t,
            Err(e) => {
                pass = false;
                details.push(format!("rho {rho}: solver failed: {e}"));
                continue;
            }
        };
        let steps = &traj.snapshots[1..];
        let times: Vec<f64> = steps.iter().map(|s| s.t).collect();
        let reference = moments_at_times(&KineticParams::new(rho, 0.0), &times).expect("moment oracle");
        let (mut worst, mut at) = (0.0f64, 0.0);
        for (s, o) in steps.iter().zip(&reference) {
            let m = run.sys.moments(&s.beta0);
            for (a, b) in [(m.mu, o.mu), (m.mu_x, o.mu_x), (m.mu_y, o.mu_y)] {
                let r = rel(a, b);
                if r > worst || r.is_nan() {
                    worst = r;
                    at = s.conversion;
                }
            }
        }
        // information only: the same traces compared at equal conversion
        let conversions: Vec<f64> = steps.iter().map(|s| s.conversion).filter(|&c| c > 0.0 && c < 1.0).collect();
        let by_conversion = moments_at_conversions(&KineticParams::new(rho, 0.0), &conversions).expect("moment oracle");
        let shape_error = steps
            .iter()
            .filter(|s| s.conversion > 0.0 && s.conversion < 1.0)
            .zip(&by_conversion)
            .map(|(s, o)| {
                let m = run.sys.moments(&s.beta0);
                rel(m.mu_x, o.mu_x).max(rel(m.mu_y, o.mu_y))
            })
            .fold(0.0, f64::max);
        let t_exact = by_conversion.last().map_or(f64::NAN, |o| o.t);
        let t_solver = steps.last().map_or(f64::NAN, |s| s.t);
        details.push(format!(
            "rho {rho}: at equal conversion, max rel mu_x/mu_y error {shape_error:.3e}; time to c = {:.4}: solver {t_solver:.4}, exact {t_exact:.4}",
            conversions.last().copied().unwrap_or(f64::NAN)
        ));
        let reached = traj.last().map_or(0.0, |s| s.conversion);
        let ok = worst <= 1e-4 && reached >= 0.99 - 1e-12 && run.elapsed <= Duration::from_secs(600);
        pass &= ok;
        details.push(format!(
            "rho {rho}: max relative moment error {worst:.3e} (at c = {at:.4}), reached c = {reached:.4}, {:.1} s",
            secs(run.elapsed)
        ));
    }
    Verdict { pass, summary: "moment traces vs moment equations, rel <= 1e-4 to c = 0.99".into(), details }
}

fn chain_length_equivalence(lab: &mut Lab) -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    let ns: Vec<f64> = (1..=20).map(|n| n as f64).collect();
    for rho in RHOS {
        for lambda in [0.0, 1e-3] {
            let run = lab.solver(rho, lambda, 1.0);
            let reference = lab.reference(rho, lambda);
            let (Some(snap), Some(state)) = (run.at(0.9), reference.at(0.9)) else {
                pass = false;
                details.push(format!(
                    "rho {rho} lambda {lambda}: missing state (solver {:?}, oracle {:?})",
                    run.traj.as_ref().err(),
                    reference.states.as_ref().err()
                ));
                continue;
            };
            let basis = run.sys.cache().basis();
            let ld = chain_length_distribution(basis, &snap.beta0, &snap.beta1, &ns).expect("n >= 1");
            let mut worst = 0.0f64;
            let mut worst_n = 0;
            for n in 1..=20usize {
                let (a, b) = state.chain_length(n);
                let o = a + b;
                if o > 1e-12 {
                    let r = rel(ld.total[n - 1], o);
                    if r > worst || r.is_nan() {
                        worst = r;
                        worst_n = n;
                    }
                }
            }
            let leak = state.leak();
            let elapsed = run.elapsed + reference.elapsed;
            let ok = leak < LEAK_GATE && worst <= 1e-3 && elapsed <= Duration::from_secs(900);
            pass &= ok;
            details.push(format!(
                "rho {rho} lambda {lambda}: max rel ld error {worst:.3e} (n = {worst_n}), oracle leak {leak:.3e}, {:.1} s",
                secs(elapsed)
            ));
        }
    }
    Verdict { pass, summary: "ld(n), n <= 20, vs 25x50 lattice at c = 0.9, rel <= 1e-3, leak < 1e-6".into(), details }
}

fn mass_conservation(lab: &mut Lab) -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for rho in RHOS {
        for lambda in [0.0, 1e-3] {
            let run = lab.solver(rho, lambda, 1.0);
            let Ok(traj) = &run.traj else {
                pass = false;
                details.push(format!("rho {rho} lambda {lambda}: no trajectory"));
                continue;
            };
            let first = traj.snapshots[0].beta0.clone();
            let initial = run.sys.moments(&first).acyclic_mass();
            let mut worst = (initial - 1.0).abs();
            let mut at = 0.0;
            for (d, s) in traj.diagnostics.iter().zip(&traj.snapshots[1..]) {
                if (d.mass - 1.0).abs() > worst {
                    worst = (d.mass - 1.0).abs();
                    at = s.conversion;
                }
            }
            pass &= worst <= 1e-6;
            details.push(format!("rho {rho} lambda {lambda}: max |m - 1| = {worst:.3e} (at c = {at:.4})"));
        }
    }
    Verdict { pass, summary: "|m(t) - 1| <= 1e-6 at every accepted step".into(), details }
}

fn jacobian_consistency() -> Verdict {
    let start = Instant::now();
    let xs: Vec<f64> = (1..=5).map(f64::from).collect();
    let ys: Vec<f64> = (0..=9).map(f64::from).collect();
    let basis = GaussianBasis::from_grid(&GridSpec::new(xs, ys, DEFAULT_SHAPE)).expect("grid");
    let n = basis.len();
    let cache = Arc::new(OperatorCache::build(Arc::new(basis)).expect("cache"));
    let mut rng = StdRng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let omega = if k < 10 { 1.0 } else { 2.0 / 3.0 };
        let params =
            KineticParams { rho: rng.gen_range(0.1..10.0), lambda: rng.gen_range(0.0..1e-2), rate: 1.0, omega };
        let sys = AssembledSystem::new(cache.clone(), params).expect("params");
        let beta = DVector::from_fn(n, |_, _| rng.gen_range(0.0..1.0) / n as f64);
        let h = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let load = CyclicLoad { mu_x: rng.gen_range(0.0..0.1), mu_y: rng.gen_range(0.0..0.1) };
        let jh = sys.jacobian_l0(&beta, load) * &h;
        let eps = 1e-4 * beta.amax() / h.amax();
        let fd = (sys.apply_l0(&(&beta + &h * eps), load) - sys.apply_l0(&(&beta - &h * eps), load)) / (2.0 * eps);
        worst = worst.max((fd - &jh).amax() / jh.amax());
    }
    let details = vec![format!("n = {n}, 20 pairs, worst relative error {worst:.3e}, {:.2} s", secs(start.elapsed()))];
    Verdict { pass: worst <= 1e-6, summary: "jacobian vs central differences, rel <= 1e-6".into(), details }
}

fn gaussian_bump(cache: &OperatorCache, x0: f64, y0: f64, width: f64) -> DVector<f64> {
    let values = DVector::from_iterator(
        cache.len(),
        cache
            .basis()
            .centers()
            .iter()
            .map(|&(x, y)| (-((x - x0).powi(2) + (y - y0).powi(2)) / (2.0 * width * width)).exp()),
    );
    cache.interpolate(&values).expect("interpolation")
}

fn convolution_identities() -> Verdict {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(5);
    let mut worst_closed = 0.0f64;
    let opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-14, max_intervals: 5000 };
    for _ in 0..100 {
        let (x, a, p, b, q) = loop {
            let t = (
                rng.gen_range(0.0..45.0),
                rng.gen_range(0.05..5.0),
                rng.gen_range(0.0..20.0),
                rng.gen_range(0.05..5.0),
                rng.gen_range(0.0..20.0),
            );
            if finite_convolution(t.0, t.1, t.2, t.3, t.4) > 1e-150 {
                break t;
            }
        };
        let closed = finite_convolution(x, a, p, b, q);
        let peak = (a * p + b * (x - q)) / (a + b);
        let quad = quadrature(
            |t| (-a * (t - p).powi(2)).exp() * (-b * (x - t - q).powi(2)).exp(),
            0.0,
            x,
            &[p, x - q, peak],
            opts,
        );
        worst_closed = worst_closed.max(rel(closed, quad.value));
    }

    let xs: Vec<f64> = (1..=32).map(f64::from).collect();
    let ys: Vec<f64> = (0..=32).map(f64::from).collect();
    let basis = GaussianBasis::from_grid(&GridSpec::new(xs, ys, DEFAULT_SHAPE)).expect("grid");
    let cache = OperatorCache::build(Arc::new(basis)).expect("cache");
    let q = cache.quadrature().clone();
    let mut worst_moment = 0.0f64;
    let mut worst_exact = 0.0f64;
    for _ in 0..10 {
        let f = gaussian_bump(&cache, rng.gen_range(6.0..9.0), rng.gen_range(6.0..9.0), 1.5);
        let g = gaussian_bump(&cache, rng.gen_range(6.0..9.0), rng.gen_range(6.0..9.0), 1.5);
        let product = q.dot(&f) * q.dot(&g);
        let at_centers = cache.convolution_values(&f) * &g;
        let collocated = cache.interpolate(&at_centers).expect("interpolation");
        worst_moment = worst_moment.max(rel(q.dot(&collocated), product));
        // the convolution of the two expansions itself, integrated exactly
        let exact: f64 =
            (0..cache.len()).map(|j| (0..cache.len()).map(|k| f[j] * g[k] * q[j] * q[k]).sum::<f64>()).sum();
        worst_exact = worst_exact.max(rel(exact, product));
    }
    let details = vec![
        format!("closed form vs adaptive quadrature, 100 tuples: worst rel {worst_closed:.3e}"),
        format!("collocated moment identity, 10 bump pairs on a 32x33 grid: worst rel {worst_moment:.3e}"),
        format!("  (uncollocated expansion product, for reference: worst rel {worst_exact:.3e})"),
        format!("{:.1} s", secs(start.elapsed())),
    ];
    Verdict {
        pass: worst_closed <= 1e-10 && worst_moment <= 1e-6,
        summary: "closed-form convolution rel <= 1e-10; mu(f*g) = mu f mu g rel <= 1e-6".into(),
        details,
    }
}

fn cyclization_phenomenology(lab: &mut Lab) -> Verdict {
    let start = Instant::now();
    let mut details = Vec::new();
    let lambdas = [1e-6, 1e-5, 1e-4, 1e-3];
    let mut solver_nc = Vec::new();
    let mut oracle_nc = Vec::new();
    let mut elapsed = Duration::ZERO;
    for lambda in lambdas {
        let run = lab.solver(1.0, lambda, 1.0);
        let reference = lab.reference(1.0, lambda);
        elapsed += run.elapsed + reference.elapsed;
        let s = run.scalars(0.99).map_or(f64::NAN, |r| r.cyclized);
        let o = reference.at(0.99).map_or(f64::NAN, |st| commands_scalars(st).cyclized);
        details.push(format!("rho 1 lambda {lambda:e}: n_C(0.99) solver {s:.6e}, oracle {o:.6e}"));
        solver_nc.push(s);
        oracle_nc.push(o);
    }
    let monotone = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);
    let a_ok = monotone(&solver_nc) && monotone(&oracle_nc);
    let spread = |v: &[f64]| {
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        (max - min) / min.abs()
    };
    let mut s09 = Vec::new();
    let mut o09 = Vec::new();
    for rho in RHOS {
        let run = lab.solver(rho, 1e-3, 1.0);
        let reference = lab.reference(rho, 1e-3);
        elapsed += run.elapsed + reference.elapsed;
        s09.push(run.scalars(0.9).map_or(f64::NAN, |r| r.cyclized));
        o09.push(reference.at(0.9).map_or(f64::NAN, |st| commands_scalars(st).cyclized));
    }
    let (ss, os) = (spread(&s09), spread(&o09));
    details.push(format!("lambda 1e-3, c = 0.9: n_C solver {s09:?}, spread {ss:.3e}"));
    details.push(format!("lambda 1e-3, c = 0.9: n_C oracle {o09:?}, spread {os:.3e}"));
    let b_ok = ss <= 0.01 && os <= 0.01;
    details.push(format!(
        "(a) monotone in lambda: {a_ok}; (b) rho spread <= 1%: {b_ok}; {:.1} s of runs ({:.1} s new)",
        secs(elapsed),
        secs(start.elapsed())
    ));
    Verdict {
        pass: a_ok && b_ok && elapsed <= Duration::from_secs(1200),
        summary: "n_C nondecreasing in lambda at c = 0.99; rho spread <= 1% at c = 0.9".into(),
        details,
    }
}

fn commands_scalars(state: &MasterState) -> ScalarRow {
    hyperbranch_cli::commands::oracle_scalars(state)
}

fn branching_phenomenology(lab: &mut Lab) -> Verdict {
    let mut details = Vec::new();
    let mut dbs = Vec::new();
    let mut agree = true;
    for rho in RHOS {
        let run = lab.solver(rho, 0.0, 1.0);
        let reference = lab.reference(rho, 0.0);
        let s = run.scalars(0.99).map_or(f64::NAN, |r| r.branching);
        let o = reference.at(0.99).map_or(f64::NAN, |st| commands_scalars(st).branching);
        let diff = (s - o).abs();
        agree &= diff <= 1e-3;
        details.push(format!("rho {rho}: db(0.99) solver {s:.6}, oracle {o:.6}, |diff| {diff:.3e}"));
        dbs.push(s);
    }
    let increasing = dbs.windows(2).all(|w| w[1] > w[0]);
    details.push(format!("strictly increasing in rho: {increasing}"));
    Verdict {
        pass: increasing && agree,
        summary: "db(0.99) increasing in rho and within 1e-3 of oracle".into(),
        details,
    }
}

fn shielding(lab: &mut Lab) -> Verdict {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    let shielded = lab.solver(1.0, 0.0, 2.0 / 3.0);
    let plain = lab.solver(1.0, 0.0, 1.0);
    let o_shielded = lab.oracle(1.0, 0.0, 2.0 / 3.0, Coupling::Truncated);
    let o_plain = lab.oracle(1.0, 0.0, 1.0, Coupling::Truncated);
    for c in CHECKPOINTS {
        let mn = |r: Option<ScalarRow>| r.map_or(f64::NAN, |r| r.mass / r.molecule_count);
        let (s23, s1) = (mn(shielded.scalars(c)), mn(plain.scalars(c)));
        let lattice = |o: &OracleRun| o.at(c).map_or((f64::NAN, f64::NAN), |st| st.chain_length_averages());
        let ((o23, w23), (o1, w1)) = (lattice(&o_shielded), lattice(&o_plain));
        let ok = s23 < s1 && o23 < o1;
        pass &= ok;
        details.push(format!(
            "c = {c}: Mn solver omega=2/3 {s23:.9} vs omega=1 {s1:.9}; Mn lattice {o23:.9} vs {o1:.9}; Mw lattice {w23:.6} vs {w1:.6}"
        ));
    }
    let total = shielded.elapsed + o_shielded.elapsed + o_plain.elapsed;
    pass &= total <= Duration::from_secs(900);
    details.push(format!("{:.1} s of runs ({:.1} s new)", secs(total), secs(start.elapsed())));
    Verdict { pass, summary: "omega = 2/3 gives strictly smaller number-average length".into(), details }
}

fn cycle_length_machinery(lab: &mut Lab) -> Verdict {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut symmetric = true;
    for x in 1..=200u64 {
        for i in 0..=x {
            if expected_depth(i, x).unwrap().to_bits() != expected_depth(x - i, x).unwrap().to_bits() {
                symmetric = false;
            }
        }
    }
    let cl2 = expected_cycle_length(2.0, 0.0, 0).unwrap();
    let mut halves = true;
    let mut rng = StdRng::seed_from_u64(9);
    for _ in 0..1000 {
        let (x, y) = (rng.gen_range(2.0..1e6), rng.gen_range(0.0..1e6));
        halves &= expected_cycle_length(x, y, 1).unwrap() == expected_cycle_length(x, y, 0).unwrap() / 2.0;
    }
    details.push(format!(
        "depth symmetry exact for x <= 200: {symmetric}; cl(2,0,0) = {cl2}; linear closure halves: {halves}"
    ));

    let edges: Vec<f64> = (0..=200).map(|k| 10f64.powf(4.0 * k as f64 / 200.0)).collect();
    let cd = |run: &SolverRun, stride: usize| -> Option<CycleDistribution> {
        let traj = run.traj.as_ref().ok()?;
        let mut steps: Vec<Snapshot> = traj.snapshots.iter().step_by(stride).cloned().collect();
        if (traj.snapshots.len() - 1) % stride != 0 {
            steps.push(traj.snapshots.last()?.clone());
        }
        cycle_length_distribution(&run.sys, &steps, &edges).ok()
    };
    let mut stable = true;
    let mut medians = Vec::new();
    for lambda in [1e-6, 1e-5, 1e-4] {
        let run = lab.solver(1.0, lambda, 1.0);
        let (Some(fine), Some(coarse)) = (cd(&run, 1), cd(&run, 2)) else {
            stable = false;
            medians.push(f64::NAN);
            continue;
        };
        let l1: f64 =
            fine.density.iter().zip(&coarse.density).zip(fine.widths()).map(|((a, b), w)| (a - b).abs() * w).sum();
        stable &= l1 <= 0.01;
        let m = median(&fine).unwrap_or(f64::NAN);
        medians.push(m);
        let mu1 = run.traj.as_ref().ok().and_then(|t| t.last()).map_or(f64::NAN, |s| run.sys.moments(&s.beta1).mu);
        details.push(format!(
            "lambda {lambda:e}: L1 change under spacing halving {l1:.3e}, median {m:.4}, raw total {:.4e} vs mu f1 {mu1:.4e}",
            fine.raw_total
        ));
    }
    let nonincreasing = medians.windows(2).all(|w| w[1] <= w[0]);
    details.push(format!("median nonincreasing in lambda: {nonincreasing}; {:.1} s", secs(start.elapsed())));
    Verdict {
        pass: symmetric && cl2 == 2.5 && halves && stable && nonincreasing,
        summary: "depth symmetry, cl identities, cd spacing stability <= 1% L1, median order".into(),
        details,
    }
}

fn sample_config(dir: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::with_preset("tiny", KineticParams::new(1.0, 1e-3), vec![0.3, 0.5]);
    cfg.output_dir = dir.to_path_buf();
    cfg.post.scalars = true;
    cfg.post.chain_length = Some(ChainLengthGrid { n_max: 12.0, dense_to: 12, points: 4 });
    cfg.post.branching = Some(BranchingGrid { points: 20 });
    cfg.post.cycle_length = Some(CycleGrid { n_min: 1.0, n_max: 100.0, bins: 20 });
    cfg.post.db_length = Some(DbLengthGrid { db_points: 10, n_min: 1.0, n_max: 12.0, n_points: 10 });
    cfg.post.levels = Some(LevelSet { a: 2.0, count: 6, points: 12 });
    cfg
}

fn directory_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("output dir")
        .map(|e| {
            let e = e.expect("entry");
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).expect("file"))
        })
        .collect();
    out.sort();
    out
}

fn determinism_and_order(lab: &mut Lab) -> Verdict {
    let start = Instant::now();
    let mut details = Vec::new();
    let tmp = tempfile::tempdir().expect("tempdir");
    let outputs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let cfg = sample_config(&tmp.path().join(name));
            cmd_run(&cfg).and_then(|_| cmd_post(&cfg)).map(|_| directory_bytes(&cfg.output_dir))
        })
        .collect();
    let identical = match (&outputs[0], &outputs[1]) {
        (Ok(a), Ok(b)) => {
            details.push(format!("{} files compared", a.len()));
            a == b
        }
        (a, b) => {
            details.push(format!("pipeline failed: {:?} {:?}", a.as_ref().err(), b.as_ref().err()));
            false
        }
    };

    let sys = AssembledSystem::new(lab.reduced.clone(), KineticParams::new(1.0, 0.0)).expect("params");
    let t_end = 1.0;
    let exact = moments_at_times(&KineticParams::new(1.0, 0.0), &[t_end]).expect("oracle")[0];
    let final_moments =
        |tau: f64, details: &mut Vec<String>| match integrate_fixed(&sys, tau, t_end, &SolverConfig::default()) {
            Ok(traj) => {
                let m = sys.moments(&traj.last().expect("steps").beta0);
                [m.mu, m.mu_x, m.mu_y]
            }
            Err(e) => {
                details.push(format!("tau {tau}: {e}"));
                [f64::NAN; 3]
            }
        };
    let taus = [0.02, 0.01, 0.005];
    let runs: Vec<[f64; 3]> = taus.iter().map(|&tau| final_moments(tau, &mut details)).collect();
    let worst = |m: &[f64; 3], r: [f64; 3]| (0..3).map(|k| rel(m[k], r[k])).fold(0.0, f64::max);
    let errors: Vec<f64> = runs.iter().map(|m| worst(m, [exact.mu, exact.mu_x, exact.mu_y])).collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    // same discretization, fine step: isolates the temporal error
    let fine = final_moments(0.000625, &mut details);
    let self_errors: Vec<f64> = runs.iter().map(|m| worst(m, fine)).collect();
    let self_ratios: Vec<f64> = self_errors.windows(2).map(|w| w[0] / w[1]).collect();
    let order_ok = ratios.iter().all(|r| (r - 2.0).abs() <= 0.3);
    details.push(format!("byte-identical reruns: {identical}"));
    details.push(format!("moment error at t = 1 for tau 0.02/0.01/0.005: {errors:?}, ratios {ratios:?}"));
    details.push(format!("  against a tau = 0.000625 run on the same basis: {self_errors:?}, ratios {self_ratios:?}"));
    details.push(format!("{:.1} s", secs(start.elapsed())));
    Verdict {
        pass: identical && order_ok,
        summary: "identical configs give identical bytes; tau halving ratio 2 +- 0.3".into(),
        details,
    }
}

fn scale_smoke_test() -> Verdict {
    let start = Instant::now();
    let mut details = Vec::new();
    let grid = GridSpec::production();
    let outcome = (|| -> Result<Trajectory, String> {
        let basis = GaussianBasis::from_grid(&grid).map_err(|e| e.to_string())?;
        let cache = Arc::new(OperatorCache::build(Arc::new(basis)).map_err(|e| e.to_string())?);
        details.push(format!("n = {}, cache built in {:.1} s", cache.len(), secs(start.elapsed())));
        let sys = AssembledSystem::new(cache, KineticParams::new(1.0, 1e-4)).map_err(|e| e.to_string())?;
        let cfg = SolverConfig::default().with_target(0.999);
        let traj = integrate(&sys, &cfg).map_err(|e| e.to_string())?;
        if let Some(last) = traj.last() {
            details.push(format!(
                "reached c = {:.5} in {} steps, mass {:.6}",
                last.conversion,
                traj.snapshots.len() - 1,
                sys.moments(&last.beta0).acyclic_mass() + sys.moments(&last.beta1).cyclic_mass()
            ));
        }
        Ok(traj)
    })();
    let elapsed = start.elapsed();
    let ok = match &outcome {
        Ok(t) => t.last().is_some_and(|s| s.conversion >= 0.999),
        Err(e) => {
            details.push(format!("failed: {e}"));
            false
        }
    };
    details.push(format!("wall time {:.1} min", elapsed.as_secs_f64() / 60.0));
    Verdict {
        pass: ok && elapsed <= Duration::from_secs(4 * 3600),
        summary: "production-size basis integrates to c = 0.999 within 4 h".into(),
        details,
    }
}

fn main() {
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |k: u32| only.as_ref().is_none_or(|v| v.contains(&k));
    let mut lab = Lab::new();
    let criteria: Vec<(u32, &str, Check)> = vec![
        (1, "moment-oracle equivalence", Box::new(moment_oracle_equivalence)),
        (2, "master-equation CLD equivalence", Box::new(chain_length_equivalence)),
        (3, "mass conservation", Box::new(mass_conservation)),
        (4, "jacobian consistency", Box::new(|_| jacobian_consistency())),
        (5, "convolution identities", Box::new(|_| convolution_identities())),
        (6, "cyclization phenomenology", Box::new(cyclization_phenomenology)),
        (7, "branching phenomenology", Box::new(branching_phenomenology)),
        (8, "shielding", Box::new(shielding)),
        (9, "cycle-length machinery", Box::new(cycle_length_machinery)),
        (10, "determinism and convergence order", Box::new(determinism_and_order)),
        (11, "scale smoke test", Box::new(|_| scale_smoke_test())),
    ];
    let mut verdicts = Vec::new();
    for (k, name, check) in &criteria {
        if !wanted(*k) {
            continue;
        }
        let v = check(&mut lab);
        for d in &v.details {
            println!("      {d}");
        }
        let line = format!("criterion {k:>2} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.summary);
        println!("{line}");
        verdicts.push((v.pass, line));
    }
    println!();
    println!("acceptance summary");
    for (_, line) in &verdicts {
        println!("  {line}");
    }
    let failed = verdicts.iter().filter(|(p, _)| !p).count();
    println!("{} passed, {failed} failed", verdicts.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
