use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use log::{info, warn};
use nalgebra::DVector;

use hyperbranch::oracle::{master_equation_run, MasterOptions, MasterState, LEAK_GATE};
use hyperbranch::postprocess::{
    branching_distribution, chain_length_distribution, cycle_length_distribution, db_length_field, level_values,
    scalars_of, ScalarRow,
};
use hyperbranch::solver::{integrate, Snapshot, Trajectory};
use hyperbranch::{AssembledSystem, GaussianBasis, OperatorCache};

use crate::config::{conversion_tag, RunConfig};
use crate::error::CliError;
use crate::io::Table;
use crate::store::{basis_hash, hex, load_or_build};

/// Operator cache for the configured basis plus its content hash.
pub struct Prepared {
    pub cache: Arc<OperatorCache>,
    pub hash: String,
    pub hit: bool,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let grid = cfg.basis.resolve()?;
    let basis = Arc::new(GaussianBasis::from_grid(&grid)?);
    let hash = hex(&basis_hash(&basis));
    let loaded = load_or_build(cfg.cache_dir.as_deref(), basis)?;
    Ok(Prepared { cache: Arc::new(loaded.cache), hash, hit: loaded.hit })
}

pub fn system(cfg: &RunConfig) -> Result<(AssembledSystem, String), CliError> {
    let p = prepare(cfg)?;
    Ok((AssembledSystem::new(p.cache, cfg.kinetics)?, p.hash))
}

/// Builds (or finds) the persisted operator cache. Returns true on a hit.
pub fn cmd_cache(cfg: &RunConfig) -> Result<bool, CliError> {
    if cfg.cache_dir.is_none() {
        return Err(CliError::Config("cache_dir is not set".into()));
    }
    Ok(prepare(cfg)?.hit)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub const TRAJECTORY_COLUMNS: [&str; 13] = [
    "step",
    "t",
    "conversion",
    "tau",
    "newton_iterations",
    "last_correction",
    "mu0",
    "mu_x0",
    "mu_y0",
    "mu1",
    "mu_x1",
    "mu_y1",
    "mass",
];

pub fn trajectory_table(sys: &AssembledSystem, traj: &Trajectory, hash: &str) -> Table {
    let mut t = Table::new("trajectory", &TRAJECTORY_COLUMNS).with_meta("basis", hash);
    for (k, s) in traj.snapshots.iter().enumerate() {
        let a = sys.moments(&s.beta0);
        let c = sys.moments(&s.beta1);
        let (tau, iters, last) = match k.checked_sub(1).and_then(|i| traj.diagnostics.get(i)) {
            Some(d) => (d.tau, d.iterations as f64, d.corrections.last().copied().unwrap_or(0.0)),
            None => (0.0, 0.0, 0.0),
        };
        t.push(vec![
            k as f64,
            s.t,
            s.conversion,
            tau,
            iters,
            last,
            a.mu,
            a.mu_x,
            a.mu_y,
            c.mu,
            c.mu_x,
            c.mu_y,
            a.acyclic_mass() + c.cyclic_mass(),
        ]);
    }
    t
}

pub fn snapshots_table(traj: &Trajectory, hash: &str) -> Table {
    let mut t =
        Table::new("snapshots", &["step", "t", "conversion", "index", "beta0", "beta1"]).with_meta("basis", hash);
    for (k, s) in traj.snapshots.iter().enumerate() {
        for i in 0..s.beta0.len() {
            t.push(vec![k as f64, s.t, s.conversion, i as f64, s.beta0[i], s.beta1[i]]);
        }
    }
    t
}

pub fn state_table(basis: &GaussianBasis, snap: &Snapshot, hash: &str) -> Table {
    let mut t = Table::new("state", &["index", "x", "y", "beta0", "beta1"])
        .with_meta("basis", hash)
        .with_meta("t", crate::io::fmt_float(snap.t))
        .with_meta("conversion", crate::io::fmt_float(snap.conversion));
    for (i, &(x, y)) in basis.centers().iter().enumerate() {
        t.push(vec![i as f64, x, y, snap.beta0[i], snap.beta1[i]]);
    }
    t
}

fn state_name(c: f64) -> String {
    format!("state_c{}.csv", conversion_tag(c))
}

/// Integrates and writes `trajectory.csv`, `snapshots.csv` and one
/// `state_c{conv}.csv` per requested conversion.
pub fn cmd_run(cfg: &RunConfig) -> Result<Trajectory, CliError> {
    let (sys, hash) = system(cfg)?;
    let traj = integrate(&sys, &cfg.solver_config())?;
    let out = &cfg.output_dir;
    ensure_dir(out)?;
    trajectory_table(&sys, &traj, &hash).write(&out.join("trajectory.csv"))?;
    snapshots_table(&traj, &hash).write(&out.join("snapshots.csv"))?;
    for &c in &cfg.conversions {
        match traj.checkpoint(c) {
            Some(s) => state_table(sys.cache().basis(), s, &hash).write(&out.join(state_name(c)))?,
            None => warn!("conversion {c} was not reached"),
        }
    }
    info!("run finished: {} steps, {} rejected", traj.snapshots.len(), traj.rejected);
    Ok(traj)
}

fn check_basis(table: &Table, hash: &str, path: &Path) -> Result<(), CliError> {
    match table.meta("basis") {
        Some(h) if h == hash => Ok(()),
        other => Err(CliError::Missing {
            path: path.to_path_buf(),
            reason: format!("written for basis {other:?}, config resolves to {hash}"),
        }),
    }
}

pub fn load_snapshots(path: &Path, hash: &str, n: usize) -> Result<Vec<Snapshot>, CliError> {
    let table = Table::read(path, "snapshots")?;
    check_basis(&table, hash, path)?;
    if table.rows.len() % n != 0 {
        return Err(CliError::Missing { path: path.to_path_buf(), reason: "row count is not a multiple of n".into() });
    }
    Ok(table
        .rows
        .chunks(n)
        .map(|rows| Snapshot {
            t: rows[0][1],
            conversion: rows[0][2],
            beta0: DVector::from_iterator(n, rows.iter().map(|r| r[4])),
            beta1: DVector::from_iterator(n, rows.iter().map(|r| r[5])),
        })
        .collect())
}

pub fn load_state(path: &Path, hash: &str, n: usize) -> Result<Snapshot, CliError> {
    let table = Table::read(path, "state")?;
    check_basis(&table, hash, path)?;
    if table.rows.len() != n {
        return Err(CliError::Missing { path: path.to_path_buf(), reason: format!("expected {n} rows") });
    }
    let meta = |k: &str| table.meta(k).and_then(|v| v.parse::<f64>().ok()).unwrap_or(f64::NAN);
    Ok(Snapshot {
        t: meta("t"),
        conversion: meta("conversion"),
        beta0: DVector::from_iterator(n, table.rows.iter().map(|r| r[3])),
        beta1: DVector::from_iterator(n, table.rows.iter().map(|r| r[4])),
    })
}

pub const SCALAR_COLUMNS: [&str; 10] =
    ["t", "conversion", "conversion_printed", "n_A", "n_L", "n_T", "n_D", "n_C", "db", "mass"];

fn scalar_row(r: &ScalarRow) -> Vec<f64> {
    vec![
        r.t,
        r.conversion,
        r.molecule_count,
        r.free_a,
        r.linear,
        r.terminal,
        r.dendritic,
        r.cyclized,
        r.branching,
        r.mass,
    ]
}

/// Writes the selected distribution tables and returns their paths.
pub fn cmd_post(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let sel = &cfg.post;
    if sel.is_empty() {
        return Ok(Vec::new());
    }
    let (sys, hash) = system(cfg)?;
    let n = sys.len();
    let basis = sys.cache().basis().clone();
    let out = &cfg.output_dir;
    let mut written = Vec::new();
    let mut emit = |table: Table, name: String| -> Result<(), CliError> {
        let path = out.join(name);
        table.write(&path)?;
        written.push(path);
        Ok(())
    };

    let need_steps = sel.scalars || sel.cycle_length.is_some();
    let steps = if need_steps { load_snapshots(&out.join("snapshots.csv"), &hash, n)? } else { Vec::new() };
    if sel.scalars {
        let mut t = Table::new("scalars", &SCALAR_COLUMNS).with_meta("basis", hash.as_str());
        for s in &steps {
            t.push(scalar_row(&scalars_of(sys.plain_functionals(), s)));
        }
        emit(t, "scalars.csv".into())?;
    }
    if let Some(grid) = &sel.cycle_length {
        let edges = grid.edges();
        let d = cycle_length_distribution(&sys, &steps, &edges)?;
        let mut t = Table::new("cd", &["n_lo", "n_hi", "n_mid", "density"])
            .with_meta("empty", d.empty.to_string())
            .with_meta("raw_total", crate::io::fmt_float(d.raw_total))
            .with_meta("skipped", crate::io::fmt_float(d.skipped))
            .with_meta("outside", crate::io::fmt_float(d.outside));
        if !d.empty {
            for (k, w) in edges.windows(2).enumerate() {
                t.push(vec![w[0], w[1], 0.5 * (w[0] + w[1]), d.density[k]]);
            }
        }
        emit(t, "cd.csv".into())?;
    }

    let wants_states =
        sel.chain_length.is_some() || sel.branching.is_some() || sel.db_length.is_some() || sel.levels.is_some();
    if !wants_states {
        return Ok(written);
    }
    if let Some(levels) = &sel.levels {
        let mut t = Table::new("levels", &["k", "level"]);
        for (k, v) in level_values(levels.a, levels.count).into_iter().enumerate() {
            t.push(vec![k as f64, v]);
        }
        emit(t, "levelsets_levels.csv".into())?;
    }
    for &c in &cfg.conversions {
        let tag = conversion_tag(c);
        let state = load_state(&out.join(state_name(c)), &hash, n)?;
        if let Some(grid) = &sel.chain_length {
            let d = chain_length_distribution(&basis, &state.beta0, &state.beta1, &grid.values())?;
            let mut t = Table::new("cld", &["n", "ld_acyclic", "ld_cyclic", "ld_total", "n2_ld"])
                .with_meta("floored", crate::io::fmt_float(d.floored));
            for k in 0..d.abscissa.len() {
                let nn = d.abscissa[k];
                t.push(vec![nn, d.acyclic[k], d.cyclic[k], d.total[k], nn * nn * d.total[k]]);
            }
            emit(t, format!("cld_c{tag}.csv"))?;
        }
        if let Some(grid) = &sel.branching {
            let d = branching_distribution(&basis, &state.beta0, &state.beta1, &grid.values())?;
            let mut t = Table::new("bd", &["b", "bd_acyclic", "bd_cyclic", "bd_total"])
                .with_meta("floored", crate::io::fmt_float(d.floored));
            for k in 0..d.abscissa.len() {
                t.push(vec![d.abscissa[k], d.acyclic[k], d.cyclic[k], d.total[k]]);
            }
            emit(t, format!("bd_c{tag}.csv"))?;
        }
        if let Some(grid) = &sel.db_length {
            let total = &state.beta0 + &state.beta1;
            let field = db_length_field(&basis, &total, &grid.db_values(), &grid.n_values())?;
            let mut t = Table::new("db_vs_n", &["db", "n", "x", "y", "value", "jacobian", "density"]);
            for p in field {
                t.push(vec![p.db, p.n, p.x, p.y, p.value, p.jacobian, p.density]);
            }
            emit(t, format!("db_vs_n_c{tag}.csv"))?;
        }
        if let Some(levels) = &sel.levels {
            let (x_top, y_top) = basis.domain_bounds();
            let xs = geometric(1.0, x_top, levels.points);
            let mut ys = vec![0.0];
            ys.extend(geometric(1.0, y_top.max(1.0), levels.points));
            let mut t = Table::new("levelset_field", &["x", "y", "f0", "f1"]);
            for &y in &ys {
                for &x in &xs {
                    t.push(vec![
                        x,
                        y,
                        basis.eval_expansion(&state.beta0, x, y),
                        basis.eval_expansion(&state.beta1, x, y),
                    ]);
                }
            }
            emit(t, format!("levelsets_c{tag}.csv"))?;
        }
    }
    Ok(written)
}

fn geometric(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 || hi <= lo {
        return vec![lo];
    }
    let r = (hi / lo).ln();
    (0..points).map(|k| lo * (r * k as f64 / (points - 1) as f64).exp()).collect()
}

pub fn oracle_scalars(state: &MasterState) -> ScalarRow {
    let a = state.reference_moments();
    let c = state.cyclic_moments();
    let conversion = 1.0 - a.mu;
    let terminal = a.mu_x + c.mu_x;
    let linear = a.mu_y + c.mu_y;
    let free_a = 1.0 - conversion;
    let dendritic = terminal - free_a;
    ScalarRow {
        t: state.t,
        conversion,
        molecule_count: a.mu + c.mu,
        free_a,
        linear,
        terminal,
        dendritic,
        cyclized: if conversion > 0.0 { c.mu / conversion } else { 0.0 },
        branching: hyperbranch::postprocess::degree_of_branching(dendritic, linear),
        mass: 2.0 * a.mu_x + a.mu_y - a.mu + 2.0 * c.mu_x + c.mu_y,
    }
}

/// Runs the truncated master equation and writes reference tables in the
/// same schemas as `post`, plus `compare.csv` when solver chain-length
/// tables are present.
pub fn cmd_oracle(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let o = &cfg.oracle;
    let opts = MasterOptions { coupling: o.coupling()?, ..Default::default() };
    let states = master_equation_run(&cfg.kinetics, o.x_max, o.y_max, &cfg.conversions, opts)?;
    let out = &cfg.output_dir;
    ensure_dir(out)?;
    let mut written = Vec::new();

    let mut scalars = Table::new("scalars", &SCALAR_COLUMNS);
    for s in &states {
        scalars.push(scalar_row(&oracle_scalars(s)));
    }
    let path = out.join("oracle_scalars.csv");
    scalars.write(&path)?;
    written.push(path);

    let mut compare = Table::new("compare", &["conversion", "n", "solver", "oracle", "rel_error"]);
    let mut compared = false;
    for (s, &c) in states.iter().zip(&cfg.conversions) {
        let usable = s.leak() < LEAK_GATE;
        if !usable {
            warn!("oracle leak {:.3e} at c = {c} exceeds the gate {LEAK_GATE:e}", s.leak());
        }
        let mut t = Table::new("cld", &["n", "ld_acyclic", "ld_cyclic", "ld_total", "n2_ld"])
            .with_meta("leak", crate::io::fmt_float(s.leak()))
            .with_meta("usable", usable.to_string());
        for n in 1..=o.n_max as usize {
            let (a, b) = s.chain_length(n);
            let nn = n as f64;
            t.push(vec![nn, a, b, a + b, nn * nn * (a + b)]);
        }
        let tag = conversion_tag(c);
        let path = out.join(format!("oracle_cld_c{tag}.csv"));
        t.write(&path)?;
        written.push(path);

        let solver_path = out.join(format!("cld_c{tag}.csv"));
        if solver_path.exists() {
            let solver = Table::read(&solver_path, "cld")?;
            let ns = solver.column("n").unwrap_or_default();
            let ld = solver.column("ld_total").unwrap_or_default();
            for row in &t.rows {
                if let Some(k) = ns.iter().position(|&v| v == row[0]) {
                    let rel = if row[3] != 0.0 { (ld[k] - row[3]).abs() / row[3].abs() } else { f64::NAN };
                    compare.push(vec![c, row[0], ld[k], row[3], rel]);
                    compared = true;
                }
            }
        }
    }
    let mut cd = Table::new("cd", &["n_lo", "n_hi", "n_mid", "density"]).with_meta("empty", "true");
    if cfg.kinetics.lambda != 0.0 {
        cd = cd.with_meta("reason", "ring sizes are not tracked by the lattice oracle");
    }
    let path = out.join("oracle_cd.csv");
    cd.write(&path)?;
    written.push(path);
    if compared {
        let path = out.join("compare.csv");
        compare.write(&path)?;
        written.push(path);
    }
    Ok(written)
}

/// Sub-directory name of one sweep job.
pub fn job_dir(root: &Path, rho: f64, lambda: f64) -> PathBuf {
    root.join(format!("rho{rho:?}_lambda{lambda:?}"))
}

/// Runs `run` followed by `post` for every (rho, lambda) pair on a pool of
/// `jobs` worker threads. Each job writes only below its own directory.
pub fn cmd_sweep(cfg: &RunConfig, jobs: usize) -> Vec<(PathBuf, Result<(), CliError>)> {
    if cfg.cache_dir.is_some() {
        if let Err(e) = cmd_cache(cfg) {
            return vec![(cfg.output_dir.clone(), Err(e))];
        }
    }
    let mut tasks = Vec::new();
    for &rho in &cfg.sweep.rho {
        for &lambda in &cfg.sweep.lambda {
            let mut job = cfg.clone();
            job.kinetics.rho = rho;
            job.kinetics.lambda = lambda;
            job.output_dir = job_dir(&cfg.output_dir, rho, lambda);
            tasks.push(job);
        }
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<(), CliError>>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(tasks.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = tasks.get(k) else { break };
                let r = cmd_run(job).and_then(|_| cmd_post(job).map(|_| ()));
                results.lock().unwrap()[k] = Some(r);
            });
        }
    });
    let results = results.into_inner().unwrap();
    tasks.iter().zip(results).map(|(job, r)| (job.output_dir.clone(), r.expect("every task runs"))).collect()
}
