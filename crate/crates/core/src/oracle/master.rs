//! Direct integration of the discrete population balances on a truncated
//! lattice `0 <= x <= x_max`, `0 <= y <= y_max`.
//!
//! Products that land outside the lattice are absorbed into a leak bucket,
//! so `mass inside + bucket` stays at one.

use log::warn;

use super::dopri::{integrate, Tolerances};
use crate::error::OracleError;
use crate::kinetics::KineticParams;

/// Largest `x_max * y_max` accepted.
pub const MAX_CELLS: usize = 10_000;
/// Leak above which a state is flagged unusable.
pub const LEAK_GATE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coupling {
    /// Group counts seen by the consumption terms come from the lattice.
    Truncated,
    /// Group counts come from the exact moment equations integrated
    /// alongside (ring-free, unshielded runs only).
    ExactMoments,
}

#[derive(Clone, Copy, Debug)]
pub struct MasterOptions {
    pub rtol: f64,
    pub atol: f64,
    pub coupling: Coupling,
}

impl Default for MasterOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-18, coupling: Coupling::Truncated }
    }
}

#[derive(Clone, Debug)]
pub struct MasterState {
    pub t: f64,
    pub conversion: f64,
    pub x_max: usize,
    pub y_max: usize,
    /// Acyclic counts, index `x * (y_max + 1) + y`.
    pub f0: Vec<f64>,
    /// Cyclized counts, same layout.
    pub f1: Vec<f64>,
    /// Mass absorbed past the truncation.
    pub bucket: f64,
    /// Exact `(mu, mu_x, mu_y)` when coupled to the moment equations.
    pub exact_moments: Option<[f64; 3]>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LatticeMoments {
    pub mu: f64,
    pub mu_x: f64,
    pub mu_y: f64,
}

impl MasterState {
    fn idx(&self, x: usize, y: usize) -> usize {
        x * (self.y_max + 1) + y
    }

    pub fn f0_at(&self, x: usize, y: usize) -> f64 {
        if x > self.x_max || y > self.y_max {
            0.0
        } else {
            self.f0[self.idx(x, y)]
        }
    }

    pub fn f1_at(&self, x: usize, y: usize) -> f64 {
        if x > self.x_max || y > self.y_max {
            0.0
        } else {
            self.f1[self.idx(x, y)]
        }
    }

    fn lattice_moments(&self, f: &[f64]) -> LatticeMoments {
        let mut m = LatticeMoments::default();
        for x in 0..=self.x_max {
            for y in 0..=self.y_max {
                let v = f[self.idx(x, y)];
                m.mu += v;
                m.mu_x += x as f64 * v;
                m.mu_y += y as f64 * v;
            }
        }
        m
    }

    pub fn acyclic_moments(&self) -> LatticeMoments {
        self.lattice_moments(&self.f0)
    }

    pub fn cyclic_moments(&self) -> LatticeMoments {
        self.lattice_moments(&self.f1)
    }

    /// Acyclic moments: exact ones when coupled to the moment equations,
    /// lattice sums otherwise.
    pub fn reference_moments(&self) -> LatticeMoments {
        match self.exact_moments {
            Some([mu, mu_x, mu_y]) => LatticeMoments { mu, mu_x, mu_y },
            None => self.acyclic_moments(),
        }
    }

    /// Number- and weight-average chain length of the molecules on the
    /// lattice, both populations together.
    pub fn chain_length_averages(&self) -> (f64, f64) {
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for x in 0..=self.x_max {
            for y in 0..=self.y_max {
                let i = self.idx(x, y);
                for (flag, v) in [(0, self.f0[i]), (1, self.f1[i])] {
                    let n = unit_mass(x, y, flag);
                    m0 += v;
                    m1 += n * v;
                    m2 += n * n * v;
                }
            }
        }
        (m1 / m0, m2 / m1)
    }

    /// Monomer units held on the lattice.
    pub fn mass_inside(&self) -> f64 {
        let a = self.acyclic_moments();
        let c = self.cyclic_moments();
        2.0 * a.mu_x + a.mu_y - a.mu + 2.0 * c.mu_x + c.mu_y
    }

    /// Monomer units missing from the lattice.
    pub fn leak(&self) -> f64 {
        (1.0 - self.mass_inside()).max(0.0)
    }

    pub fn usable(&self) -> bool {
        self.leak() < LEAK_GATE
    }

    /// Number of acyclic and cyclized molecules of `n` monomer units.
    pub fn chain_length(&self, n: usize) -> (f64, f64) {
        let mut acyclic = 0.0;
        let mut cyclic = 0.0;
        for x in 0..=self.x_max {
            // acyclic: 2x + y - 1 = n
            if 2 * x <= n + 1 {
                let y = n + 1 - 2 * x;
                acyclic += self.f0_at(x, y);
            }
            if 2 * x <= n {
                let y = n - 2 * x;
                cyclic += self.f1_at(x, y);
            }
        }
        (acyclic, cyclic)
    }
}

struct Lattice {
    xm: usize,
    ym: usize,
    n: usize,
    wx: Vec<f64>,
    wy: Vec<f64>,
    params: KineticParams,
    coupling: Coupling,
    with_cycles: bool,
    // scratch
    d0: Vec<f64>,
    d1: Vec<f64>,
    tail0: Vec<f64>,
    tail1: Vec<f64>,
}

// state layout: f0 (n), f1 (n), bucket, leaked acyclic count, t,
// then mu, mu_x, mu_y when coupled
const EXTRA: usize = 3;

impl Lattice {
    fn idx(&self, x: usize, y: usize) -> usize {
        x * (self.ym + 1) + y
    }

    /// Time derivative; returns `-d(mu_total)/dt`.
    fn rhs(&mut self, s: &[f64], ds: &mut [f64]) -> f64 {
        let n = self.n;
        let (xm, ym) = (self.xm, self.ym);
        let KineticParams { rho, lambda, rate: k, .. } = self.params;
        let f0 = &s[..n];
        let f1 = &s[n..2 * n];
        self.d0.iter_mut().for_each(|v| *v = 0.0);
        self.d1.iter_mut().for_each(|v| *v = 0.0);
        let mut bucket = 0.0;
        let mut leaked0 = 0.0;

        let (m0, bx, by) = match self.coupling {
            Coupling::ExactMoments => {
                let e = &s[2 * n + EXTRA..];
                (e[0], e[1], e[2])
            }
            Coupling::Truncated => {
                let mut m0 = 0.0;
                let mut bx = 0.0;
                let mut by = 0.0;
                for x in 0..=xm {
                    for y in 0..=ym {
                        let i = self.idx(x, y);
                        let all = f0[i] + if self.with_cycles { f1[i] } else { 0.0 };
                        m0 += f0[i];
                        bx += self.wx[x] * all;
                        by += self.wy[y] * all;
                    }
                }
                (m0, bx, by)
            }
        };

        // consumption
        for x in 0..=xm {
            for y in 0..=ym {
                let i = self.idx(x, y);
                let groups = self.wx[x] + rho * self.wy[y];
                self.d0[i] -= k * f0[i] * (bx + rho * by) + k * groups * f0[i] * m0 + lambda * k * groups * f0[i];
                if self.with_cycles {
                    self.d1[i] -= k * groups * f1[i] * m0;
                }
            }
        }

        // intermolecular products; the B holder keeps its ring flag.
        // Per A row xa, suffix sums of f0 and ya*f0 give the leaked tails.
        let row = ym + 1;
        for xa in 0..=xm {
            let mut s0 = 0.0;
            let mut s1 = 0.0;
            for ya in (0..=ym).rev() {
                let a = f0[xa * row + ya];
                s0 += a;
                s1 += ya as f64 * a;
                self.tail0[xa * (row + 1) + ya] = s0;
                self.tail1[xa * (row + 1) + ya] = s1;
            }
            self.tail0[xa * (row + 1) + row] = 0.0;
            self.tail1[xa * (row + 1) + row] = 0.0;
        }
        let sources: &[(usize, &[f64])] = if self.with_cycles { &[(0, f0), (1, f1)] } else { &[(0, f0)] };
        for &(flag, fb) in sources {
            let offset = if flag == 0 { 1.0 } else { 0.0 };
            for x in 0..=xm {
                for y in 0..=ym {
                    let b = fb[self.idx(x, y)];
                    if b == 0.0 {
                        continue;
                    }
                    let gt = k * self.wx[x] * b;
                    let gl = rho * k * self.wy[y] * b;
                    for xa in 0..=xm {
                        let a_row = &f0[xa * row..(xa + 1) * row];
                        let t0 = &self.tail0[xa * (row + 1)..(xa + 1) * (row + 1)];
                        let t1 = &self.tail1[xa * (row + 1)..(xa + 1) * (row + 1)];
                        // mass of the tail ya >= from when the product sits at (tx, ty0 + ya)
                        let leak = |from: usize, tx: usize, ty0: f64| {
                            let count = t0[from];
                            (count, (2.0 * tx as f64 + ty0 - offset) * count + t1[from])
                        };
                        if gt != 0.0 && x + xa >= 1 {
                            let tx = x + xa - 1;
                            let (count, mass) = if tx <= xm {
                                // ty = y + ya + 1 <= ym  <=>  ya < ym - y
                                let fit = ym.saturating_sub(y);
                                let base = tx * row + y + 1;
                                let dest = if flag == 0 { &mut self.d0 } else { &mut self.d1 };
                                for (d, &a) in dest[base..base + fit].iter_mut().zip(&a_row[..fit]) {
                                    *d += gt * a;
                                }
                                leak(fit, tx, (y + 1) as f64)
                            } else {
                                leak(0, tx, (y + 1) as f64)
                            };
                            bucket += gt * mass;
                            if flag == 0 {
                                leaked0 += gt * count;
                            }
                        }
                        if gl != 0.0 {
                            // y >= 1 here since the linear weight vanishes at y = 0
                            let tx = x + xa;
                            let (count, mass) = if tx <= xm {
                                // ty = y + ya - 1 <= ym  <=>  ya <= ym + 1 - y
                                let fit = (ym + 2 - y).min(row);
                                let base = tx * row + y - 1;
                                let dest = if flag == 0 { &mut self.d0 } else { &mut self.d1 };
                                for (d, &a) in dest[base..base + fit].iter_mut().zip(&a_row[..fit]) {
                                    *d += gl * a;
                                }
                                leak(fit, tx, y as f64 - 1.0)
                            } else {
                                leak(0, tx, y as f64 - 1.0)
                            };
                            bucket += gl * mass;
                            if flag == 0 {
                                leaked0 += gl * count;
                            }
                        }
                    }
                }
            }
        }

        // ring closure
        if lambda != 0.0 {
            for x in 0..=xm {
                for y in 0..=ym {
                    let v = f0[self.idx(x, y)];
                    if v == 0.0 {
                        continue;
                    }
                    if x >= 1 {
                        let r = lambda * k * self.wx[x] * v;
                        if y < ym {
                            let j = self.idx(x - 1, y + 1);
                            self.d1[j] += r;
                        } else {
                            bucket += r * unit_mass(x - 1, y + 1, 1);
                        }
                    }
                    if y >= 1 {
                        let r = lambda * rho * k * self.wy[y] * v;
                        let j = self.idx(x, y - 1);
                        self.d1[j] += r;
                    }
                }
            }
        }

        ds[..n].copy_from_slice(&self.d0);
        ds[n..2 * n].copy_from_slice(&self.d1);
        ds[2 * n] = bucket;
        ds[2 * n + 1] = leaked0;
        ds[2 * n + 2] = 1.0;
        let drain = match self.coupling {
            Coupling::ExactMoments => {
                let e = &s[2 * n + EXTRA..];
                let (mu, mx, my) = (e[0], e[1], e[2]);
                ds[2 * n + EXTRA] = -k * mu * (mx + rho * my);
                ds[2 * n + EXTRA + 1] = -k * mu * mx;
                ds[2 * n + EXTRA + 2] = k * mu * mx - rho * k * mu * my;
                k * mu * (mx + rho * my)
            }
            Coupling::Truncated => -(self.d0.iter().sum::<f64>() + leaked0),
        };
        drain
    }
}

fn unit_mass(x: usize, y: usize, flag: usize) -> f64 {
    let m = 2.0 * x as f64 + y as f64;
    if flag == 0 {
        m - 1.0
    } else {
        m
    }
}

/// Runs from the monomer state and records the lattice at each requested
/// conversion (increasing, in (0, 1)).
pub fn master_equation_run(
    params: &KineticParams,
    x_max: usize,
    y_max: usize,
    conversions: &[f64],
    opts: MasterOptions,
) -> Result<Vec<MasterState>, OracleError> {
    params.validate().map_err(|e| OracleError::InvalidParams(e.to_string()))?;
    if x_max * y_max > MAX_CELLS || x_max == 0 {
        return Err(OracleError::TruncationTooLarge { x_max, y_max });
    }
    if opts.coupling == Coupling::ExactMoments && (params.lambda != 0.0 || params.omega != 1.0) {
        return Err(OracleError::CyclizationNotSupported(params.lambda));
    }
    let n = (x_max + 1) * (y_max + 1);
    let with_cycles = params.lambda != 0.0;
    let pow = |v: usize| {
        if v == 0 {
            0.0
        } else if params.omega == 1.0 {
            v as f64
        } else {
            (v as f64).powf(params.omega)
        }
    };
    let mut lat = Lattice {
        xm: x_max,
        ym: y_max,
        n,
        wx: (0..=x_max).map(pow).collect(),
        wy: (0..=y_max).map(pow).collect(),
        params: *params,
        coupling: opts.coupling,
        with_cycles,
        d0: vec![0.0; n],
        d1: vec![0.0; n],
        tail0: vec![0.0; (x_max + 1) * (y_max + 2)],
        tail1: vec![0.0; (x_max + 1) * (y_max + 2)],
    };
    let extra = if opts.coupling == Coupling::ExactMoments { 3 } else { 0 };
    let mut state = vec![0.0; 2 * n + EXTRA + extra];
    state[lat.idx(1, 0)] = 1.0;
    if extra == 3 {
        state[2 * n + EXTRA] = 1.0;
        state[2 * n + EXTRA + 1] = 1.0;
    }
    let tol = Tolerances { rtol: opts.rtol, atol: opts.atol };
    let mut scratch = vec![0.0; state.len()];
    let mut c = 0.0;
    let mut out = Vec::with_capacity(conversions.len());
    for &target in conversions {
        if !(target > 0.0 && target < 1.0) || target < c {
            return Err(OracleError::BadTarget(target));
        }
        if target > 0.95 {
            warn!("conversion {target} is past the range where truncation leak stays small");
        }
        integrate(
            |_, s, d| {
                let drain = lat.rhs(s, &mut scratch);
                for (di, si) in d.iter_mut().zip(&scratch) {
                    *di = si / drain;
                }
            },
            &mut state,
            c,
            target,
            tol,
        )?;
        c = target;
        out.push(MasterState {
            t: state[2 * n + 2],
            conversion: c,
            x_max,
            y_max,
            f0: state[..n].to_vec(),
            f1: state[n..2 * n].to_vec(),
            bucket: state[2 * n],
            exact_moments: (extra == 3)
                .then(|| [state[2 * n + EXTRA], state[2 * n + EXTRA + 1], state[2 * n + EXTRA + 2]]),
        });
    }
    Ok(out)
}
