//! Expected cycle lengths from random binary-tree depths, and the
//! accumulated distribution of closed rings.

use libm::lgamma;
use log::{info, warn};
use nalgebra::DVector;

use crate::basis::Axis;
use crate::error::PostError;
use crate::kinetics::AssembledSystem;
use crate::solver::Snapshot;

fn ln_central_binomial(m: u64) -> f64 {
    let m = m as f64;
    lgamma(2.0 * m + 1.0) - 2.0 * lgamma(m + 1.0)
}

fn central_binomial(m: u64) -> u128 {
    (1..=m as u128).fold(1u128, |acc, k| acc * (m as u128 + k) / k)
}

/// Largest tree size evaluated with exact integer binomials.
const EXACT_LIMIT: u64 = 25;
/// Largest tree size whose depth sum is accumulated term by term.
const EXPLICIT_SUM_LIMIT: u64 = 200;

/// Expected depth of leaf `i` in a random strictly binary tree with `x`
/// internal nodes.
pub fn expected_depth(i: u64, x: u64) -> Result<f64, PostError> {
    if x < 1 || i > x {
        return Err(PostError::LabelOutOfRange { i, x });
    }
    // order the pair so that depth(i) and depth(x - i) round identically
    let (a, b) = if i <= x - i { (i, x - i) } else { (x - i, i) };
    if x <= EXACT_LIMIT {
        let num = 2 * (2 * a as u128 + 1) * (2 * b as u128 + 1) * central_binomial(a) * central_binomial(b);
        let den = (x as u128 + 2) * central_binomial(x);
        return Ok(num as f64 / den as f64 - 1.0);
    }
    let prefactor = 2.0 * (2 * a + 1) as f64 * (2 * b + 1) as f64 / (x + 2) as f64;
    let ratio = (ln_central_binomial(a) + ln_central_binomial(b) - ln_central_binomial(x)).exp();
    Ok(prefactor * ratio - 1.0)
}

/// `(x + 1) (4^x / C(2x, x) - 1)`, the depth sum in closed form.
fn depth_sum_closed(x: u64) -> f64 {
    let ln = x as f64 * std::f64::consts::LN_2 * 2.0 - ln_central_binomial(x);
    (x + 1) as f64 * (ln.exp() - 1.0)
}

/// `sum_{i=0}^{x} depth(i, x)`; summed term by term for small trees and
/// in closed form above that.
pub fn depth_sum(x: u64) -> f64 {
    if x <= EXPLICIT_SUM_LIMIT {
        (0..=x).map(|i| expected_depth(i, x).expect("i <= x")).sum()
    } else {
        depth_sum_closed(x)
    }
}

/// Ring size formed by closing a molecule with `x` terminal and `y` linear
/// units; `closure` is 0 for a terminal partner and 1 for a linear one.
pub fn expected_cycle_length(x: f64, y: f64, closure: u8) -> Result<f64, PostError> {
    if !(x >= 2.0) {
        return Err(PostError::TooFewTerminals(x));
    }
    let labels = x.round().max(2.0) as u64;
    let scale = if closure == 0 { 1.0 } else { 0.5 };
    Ok(scale * (x + 0.5 * y - 1.0) / (x * x - x) * depth_sum(labels))
}

/// Binned instantaneous ring-closure rate at one snapshot.
#[derive(Clone, Debug)]
pub struct CycleFlux {
    pub t: f64,
    pub binned: Vec<f64>,
    /// Rate carried by centers with fewer than two terminal units.
    pub skipped: f64,
    /// Rate landing outside the bin edges.
    pub outside: f64,
}

#[derive(Clone, Debug)]
pub struct CycleDistribution {
    pub edges: Vec<f64>,
    /// Normalized to unit integral; all zero when `empty`.
    pub density: Vec<f64>,
    /// Time-integrated closure count before normalization.
    pub raw_total: f64,
    pub skipped: f64,
    pub outside: f64,
    /// Set when the run has no cyclization.
    pub empty: bool,
}

impl CycleDistribution {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    if v < edges[0] || v > edges[edges.len() - 1] {
        return None;
    }
    let k = edges.partition_point(|&e| e <= v);
    Some(k.saturating_sub(1).min(edges.len() - 2))
}

/// Closure rate at one snapshot, binned by expected ring size. Each center
/// contributes its nodal quadrature weight times the local rate.
pub fn snapshot_flux(sys: &AssembledSystem, nodal_weights: &DVector<f64>, snap: &Snapshot, edges: &[f64]) -> CycleFlux {
    let sizes = ring_sizes(sys);
    binned_flux(sys, nodal_weights, &sizes, snap, edges)
}

/// Expected ring size of a terminal and a linear closure at every center;
/// `None` below two terminal units.
fn ring_sizes(sys: &AssembledSystem) -> Vec<Option<(f64, f64)>> {
    sys.cache()
        .basis()
        .centers()
        .iter()
        .map(|&(x, y)| {
            let t = expected_cycle_length(x, y, 0).ok()?;
            Some((t, 0.5 * t))
        })
        .collect()
}

fn binned_flux(
    sys: &AssembledSystem,
    nodal_weights: &DVector<f64>,
    sizes: &[Option<(f64, f64)>],
    snap: &Snapshot,
    edges: &[f64],
) -> CycleFlux {
    let cache = sys.cache();
    let p = sys.params();
    let values = cache.nodal_values(&snap.beta0);
    let wx = cache.weights(Axis::X, p.omega);
    let wy = cache.weights(Axis::Y, p.omega);
    let mut flux = CycleFlux { t: snap.t, binned: vec![0.0; edges.len() - 1], skipped: 0.0, outside: 0.0 };
    for i in 0..cache.len() {
        let local = nodal_weights[i] * values[i] * p.lambda * p.rate;
        let terminal = local * wx[i];
        let linear = local * p.rho * wy[i];
        let Some((t_size, l_size)) = sizes[i] else {
            flux.skipped += terminal + linear;
            continue;
        };
        for (size, rate) in [(t_size, terminal), (l_size, linear)] {
            if rate == 0.0 {
                continue;
            }
            match bin_of(edges, size) {
                Some(k) => flux.binned[k] += rate,
                None => flux.outside += rate,
            }
        }
    }
    flux
}

/// Accumulated ring-size distribution over the snapshot sequence, by the
/// trapezoid rule in time.
pub fn cycle_length_distribution(
    sys: &AssembledSystem,
    snapshots: &[Snapshot],
    edges: &[f64],
) -> Result<CycleDistribution, PostError> {
    if snapshots.is_empty() {
        return Err(PostError::EmptyTrajectory);
    }
    assert!(edges.len() >= 2, "need at least one bin");
    let bins = edges.len() - 1;
    if sys.params().lambda == 0.0 {
        return Ok(CycleDistribution {
            edges: edges.to_vec(),
            density: vec![0.0; bins],
            raw_total: 0.0,
            skipped: 0.0,
            outside: 0.0,
            empty: true,
        });
    }
    let cache = sys.cache();
    let nodal_weights = cache.inverse().transpose() * cache.quadrature();
    let sizes = ring_sizes(sys);
    let fluxes: Vec<CycleFlux> = snapshots.iter().map(|s| binned_flux(sys, &nodal_weights, &sizes, s, edges)).collect();
    let mut mass = vec![0.0; bins];
    let mut skipped = 0.0;
    let mut outside = 0.0;
    for w in fluxes.windows(2) {
        let dt = w[1].t - w[0].t;
        for (m, (a, b)) in mass.iter_mut().zip(w[0].binned.iter().zip(&w[1].binned)) {
            *m += 0.5 * dt * (a + b);
        }
        skipped += 0.5 * dt * (w[0].skipped + w[1].skipped);
        outside += 0.5 * dt * (w[0].outside + w[1].outside);
    }
    let negative: f64 = mass.iter().filter(|&&m| m < 0.0).map(|m| -m).sum();
    if negative > 0.0 {
        info!("cycle-length distribution: floored {negative:.3e} of negative count");
    }
    for m in &mut mass {
        *m = m.max(0.0);
    }
    let raw_total: f64 = mass.iter().sum();
    if outside > 1e-3 * raw_total.abs() {
        warn!("cycle-length distribution: {outside:.3e} of closures fall outside the bin edges");
    }
    let density = mass
        .iter()
        .zip(edges.windows(2))
        .map(|(m, e)| if raw_total > 0.0 { m / raw_total / (e[1] - e[0]) } else { 0.0 })
        .collect();
    Ok(CycleDistribution { edges: edges.to_vec(), density, raw_total, skipped, outside, empty: false })
}

/// Median of a binned density, interpolating linearly inside the bin.
pub fn median(dist: &CycleDistribution) -> Option<f64> {
    let widths = dist.widths();
    let total: f64 = dist.density.iter().zip(&widths).map(|(d, w)| d * w).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut acc = 0.0;
    for (k, (d, w)) in dist.density.iter().zip(&widths).enumerate() {
        let m = d * w;
        if acc + m >= 0.5 * total && m > 0.0 {
            return Some(dist.edges[k] + w * (0.5 * total - acc) / m);
        }
        acc += m;
    }
    dist.edges.last().copied()
}
