//! Run configuration, read from and written to TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hyperbranch::basis::GridSpec;
use hyperbranch::oracle::Coupling;
use hyperbranch::{KineticParams, SolverConfig};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Directory for persisted operator caches; none disables persistence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    /// Conversions at which states are written, strictly increasing.
    pub conversions: Vec<f64>,
    pub kinetics: KineticParams,
    pub basis: BasisSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub post: PostSelection,
    #[serde(default)]
    pub oracle: OracleSettings,
    #[serde(default)]
    pub sweep: SweepSettings,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Either a named preset or explicit axis lists.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_axis: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_axis: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
}

impl BasisSpec {
    pub fn preset(name: &str) -> Self {
        Self { preset: Some(name.to_string()), ..Default::default() }
    }

    pub fn resolve(&self) -> Result<GridSpec, CliError> {
        let shape = self.shape.unwrap_or(hyperbranch::basis::DEFAULT_SHAPE);
        match (&self.preset, &self.x_axis, &self.y_axis) {
            (Some(name), None, None) => {
                let mut grid =
                    GridSpec::preset(name).ok_or_else(|| CliError::Config(format!("unknown basis preset {name:?}")))?;
                if let Some(s) = self.shape {
                    grid.shape = s;
                }
                Ok(grid)
            }
            (None, Some(x), Some(y)) => {
                let grid = GridSpec::new(x.clone(), y.clone(), shape);
                grid.validate().map_err(|e| CliError::Config(e.to_string()))?;
                Ok(grid)
            }
            _ => Err(CliError::Config("basis needs either `preset` or both `x_axis` and `y_axis`".into())),
        }
    }
}

/// Which distributions `post` extracts. Everything is off by default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PostSelection {
    #[serde(default)]
    pub scalars: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_length: Option<ChainLengthGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branching: Option<BranchingGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_length: Option<CycleGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub db_length: Option<DbLengthGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<LevelSet>,
}

impl PostSelection {
    pub fn is_empty(&self) -> bool {
        !self.scalars
            && self.chain_length.is_none()
            && self.branching.is_none()
            && self.cycle_length.is_none()
            && self.db_length.is_none()
            && self.levels.is_none()
    }
}

/// Integers `1..=dense_to`, then `points` geometric values up to `n_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainLengthGrid {
    pub n_max: f64,
    #[serde(default = "default_dense")]
    pub dense_to: u32,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_dense() -> u32 {
    20
}

fn default_points() -> usize {
    100
}

impl ChainLengthGrid {
    pub fn values(&self) -> Vec<f64> {
        let top = self.n_max.max(1.0);
        let dense = (self.dense_to as f64).min(top.floor());
        let mut out: Vec<f64> = (1..=dense as u64).map(|n| n as f64).collect();
        let start = dense.max(1.0);
        if top > start && self.points > 0 {
            let ratio = (top / start).ln();
            for k in 1..=self.points {
                out.push(start * (ratio * k as f64 / self.points as f64).exp());
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchingGrid {
    #[serde(default = "default_points")]
    pub points: usize,
}

impl BranchingGrid {
    /// `points` values evenly spaced in (0, 1], ending at 1.
    pub fn values(&self) -> Vec<f64> {
        (1..=self.points).map(|k| k as f64 / self.points as f64).collect()
    }
}

/// Geometric bin edges for ring sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleGrid {
    #[serde(default = "default_cycle_min")]
    pub n_min: f64,
    pub n_max: f64,
    #[serde(default = "default_points")]
    pub bins: usize,
}

fn default_cycle_min() -> f64 {
    1.0
}

impl CycleGrid {
    pub fn edges(&self) -> Vec<f64> {
        let ratio = (self.n_max / self.n_min).ln();
        (0..=self.bins).map(|k| self.n_min * (ratio * k as f64 / self.bins as f64).exp()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbLengthGrid {
    #[serde(default = "default_points")]
    pub db_points: usize,
    #[serde(default = "default_cycle_min")]
    pub n_min: f64,
    pub n_max: f64,
    #[serde(default = "default_points")]
    pub n_points: usize,
}

impl DbLengthGrid {
    pub fn db_values(&self) -> Vec<f64> {
        (1..=self.db_points).map(|k| k as f64 / self.db_points as f64).collect()
    }

    pub fn n_values(&self) -> Vec<f64> {
        if self.n_points < 2 {
            return vec![self.n_min];
        }
        let ratio = (self.n_max / self.n_min).ln();
        (0..self.n_points).map(|k| self.n_min * (ratio * k as f64 / (self.n_points - 1) as f64).exp()).collect()
    }
}

/// Contour levels `10^-(a + k/2)`, plus the plane sampling they are drawn on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub a: f64,
    pub count: usize,
    #[serde(default = "default_points")]
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    #[serde(default = "default_x_max")]
    pub x_max: usize,
    #[serde(default = "default_y_max")]
    pub y_max: usize,
    /// "truncated" or "exact-moments".
    #[serde(default = "default_coupling")]
    pub coupling: String,
    /// Largest chain length tabulated.
    #[serde(default = "default_dense")]
    pub n_max: u32,
}

fn default_x_max() -> usize {
    25
}

fn default_y_max() -> usize {
    50
}

fn default_coupling() -> String {
    "truncated".into()
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self { x_max: default_x_max(), y_max: default_y_max(), coupling: default_coupling(), n_max: default_dense() }
    }
}

impl OracleSettings {
    pub fn coupling(&self) -> Result<Coupling, CliError> {
        match self.coupling.as_str() {
            "truncated" => Ok(Coupling::Truncated),
            "exact-moments" => Ok(Coupling::ExactMoments),
            other => Err(CliError::Config(format!("unknown oracle coupling {other:?}"))),
        }
    }
}

/// Parameter grid for `sweep`; defaults to the full rho x lambda table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    #[serde(default = "default_rhos")]
    pub rho: Vec<f64>,
    #[serde(default = "default_lambdas")]
    pub lambda: Vec<f64>,
}

fn default_rhos() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}

fn default_lambdas() -> Vec<f64> {
    vec![0.0, 1e-6, 1e-5, 1e-4, 1e-3]
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { rho: default_rhos(), lambda: default_lambdas() }
    }
}

impl RunConfig {
    /// Minimal config on a named preset.
    pub fn with_preset(preset: &str, kinetics: KineticParams, conversions: Vec<f64>) -> Self {
        Self {
            output_dir: default_output(),
            cache_dir: None,
            conversions,
            kinetics,
            basis: BasisSpec::preset(preset),
            solver: SolverConfig::default(),
            post: PostSelection::default(),
            oracle: OracleSettings::default(),
            sweep: SweepSettings::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Missing { path: path.to_path_buf(), reason: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.conversions.is_empty() {
            return Err(CliError::Config("at least one conversion is required".into()));
        }
        if self.conversions.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
            return Err(CliError::Config("conversions must lie in (0, 1)".into()));
        }
        if self.conversions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config("conversions must be strictly increasing".into()));
        }
        self.kinetics.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.solver_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.basis.resolve()?;
        self.oracle.coupling()?;
        Ok(())
    }

    /// Solver settings with the target and checkpoints taken from
    /// `conversions`.
    pub fn solver_config(&self) -> SolverConfig {
        let mut s = self.solver.clone();
        if let Some(&last) = self.conversions.last() {
            s.target_conversion = last;
        }
        s.checkpoints = self.conversions.clone();
        s
    }
}

/// File-name tag of a conversion, e.g. `0.99` -> `0.99`.
pub fn conversion_tag(c: f64) -> String {
    format!("{c}")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
output_dir = "runs/a"
conversions = [0.5, 0.9]

[kinetics]
rho = 1.0
lambda = 1e-4

[basis]
preset = "tiny"

[solver]
max_conversion_step = 0.005

[post]
scalars = true
chain_length = { n_max = 1000.0 }
"#;

    #[test]
    fn parses_sample() {
        let c = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.kinetics.rate, 1.0);
        assert_eq!(c.solver.max_conversion_step, 0.005);
        assert_eq!(c.solver_config().target_conversion, 0.9);
        assert!(c.post.chain_length.is_some());
        assert_eq!(c.basis.resolve().unwrap().len(), 25);
    }

    #[test]
    fn round_trip_is_identity() {
        let c = RunConfig::parse(SAMPLE).unwrap();
        let again = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn rejects_unordered_conversions() {
        let text = SAMPLE.replace("[0.5, 0.9]", "[0.9, 0.5]");
        assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn rejects_unknown_preset() {
        let text = SAMPLE.replace("\"tiny\"", "\"huge\"");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn chain_grid_starts_dense() {
        let g = ChainLengthGrid { n_max: 1e4, dense_to: 5, points: 4 };
        let v = g.values();
        assert_eq!(&v[..5], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((v.last().unwrap() - 1e4).abs() < 1e-8);
    }
}
