//! Experiment configuration: a TOML document with strict keys.
//!
//! ```toml
//! kind = "heat_kernel"
//! n0 = 2
//! master_seed = 1
//!
//! [grids]
//! t = { geometric = { lo = 100.0, hi = 10000.0, points = 12 } }
//!
//! [counts]
//! environments = 200
//!
//! [radius_policy]
//! kind = "cube_root"
//! factor = 8.0
//!
//! [output]
//! dir = "results"
//! format = "csv"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{geometric_grid, BoundSuiteSpec, KernelOptions, RadiusPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    HeatKernel,
    Exponents,
    OffDiagonal,
    VerifyBounds,
    GwExact,
    Oscillations,
    BallStats,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::HeatKernel => "heat_kernel",
            ExperimentKind::Exponents => "exponents",
            ExperimentKind::OffDiagonal => "off_diagonal",
            ExperimentKind::VerifyBounds => "verify_bounds",
            ExperimentKind::GwExact => "gw_exact",
            ExperimentKind::Oscillations => "oscillations",
            ExperimentKind::BallStats => "ball_stats",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometric {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

/// Either explicit values or a geometric progression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Geometric { geometric: Geometric },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Geometric { geometric: g } => geometric_grid(g.lo, g.hi, g.points),
        }
    }

    fn check(&self, field: &str) -> Result<Vec<f64>> {
        if let Grid::Geometric { geometric: g } = self {
            if !(g.lo > 0.0) || !(g.hi > g.lo) || g.points < 2 {
                return Err(Error::config(field, "geometric grid needs 0 < lo < hi and points >= 2"));
            }
        }
        let v = self.values();
        if v.is_empty() {
            return Err(Error::config(field, "grid is empty"));
        }
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::config(field, "grid values must be finite and nonnegative"));
        }
        if v.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config(field, "grid must be strictly increasing"));
        }
        Ok(v)
    }

    fn check_integer(&self, field: &str) -> Result<Vec<u32>> {
        let v = self.check(field)?;
        if v.iter().any(|x| x.fract() != 0.0 || *x < 1.0 || *x > u32::MAX as f64) {
            return Err(Error::config(field, "grid values must be positive integers"));
        }
        Ok(v.iter().map(|&x| x as u32).collect())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    pub t: Option<Grid>,
    pub r: Option<Grid>,
    pub n: Option<Grid>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counts {
    pub environments: Option<usize>,
    pub replicas: Option<usize>,
    /// Rejection budget when conditioning on a pair lying in the cluster.
    pub max_attempts: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub kernel: Option<f64>,
    pub correction_fraction: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    /// Lowest goodness level tried.
    pub lambda1: Option<f64>,
    /// Kernel lower-bound constant of the `G3` condition.
    pub c_g3: Option<f64>,
    pub theta_cap: Option<u32>,
    /// Pair distance for the off-diagonal profile.
    pub distance: Option<u32>,
    /// Truncation degree of exact pmfs.
    pub kmax: Option<usize>,
    /// Oscillation threshold on max/min of `V(0, n)/n²`.
    pub oscillation_threshold: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputFormat {
    #[default]
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "json-lines")]
    JsonLines,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            format: OutputFormat::Csv,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Experiment id in result rows; defaults to the kind.
    pub name: Option<String>,
    #[serde(default = "default_n0")]
    pub n0: u32,
    #[serde(default)]
    pub master_seed: u64,
    /// Worker threads; results do not depend on it.
    pub workers: Option<usize>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub counts: Counts,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub radius_policy: Option<RadiusPolicy>,
    #[serde(default)]
    pub constants: Constants,
    /// Bound-suite sample sizes (verify_bounds only).
    pub bounds: Option<BoundSuiteSpec>,
    #[serde(default)]
    pub output: Output,
}

fn default_n0() -> u32 {
    2
}

/// Fully resolved parameters with per-kind defaults filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Plan {
    pub kind: ExperimentKind,
    pub name: String,
    pub n0: u32,
    pub master_seed: u64,
    pub workers: usize,
    pub t_grid: Vec<f64>,
    pub r_grid: Vec<u32>,
    pub n_grid: Vec<u32>,
    pub environments: usize,
    pub replicas: usize,
    pub max_attempts: u64,
    pub kernel: KernelOptions,
    pub lambda1: f64,
    pub c_g3: f64,
    pub theta_cap: u32,
    pub distance: u32,
    pub kmax: usize,
    pub oscillation_threshold: f64,
    pub bounds: BoundSuiteSpec,
    pub output: Output,
}

fn default_t(kind: ExperimentKind) -> Grid {
    let (lo, hi, points) = match kind {
        ExperimentKind::OffDiagonal => (10.0, 1000.0, 8),
        _ => (100.0, 1e4, 12),
    };
    Grid::Geometric { geometric: Geometric { lo, hi, points } }
}

fn powers_of_two(lo: u32, hi: u32) -> Grid {
    Grid::Values((lo..=hi).map(|k| (1u64 << k) as f64).collect())
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            name: None,
            n0: 2,
            master_seed: 0,
            workers: None,
            grids: Grids::default(),
            counts: Counts::default(),
            tolerances: Tolerances::default(),
            radius_policy: None,
            constants: Constants::default(),
            bounds: None,
            output: Output::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e.span().map_or_else(|| "<document>".to_string(), |s| format!("bytes {}..{}", s.start, s.end));
            Error::config(field, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Validate and fill defaults.
    pub fn plan(&self) -> Result<Plan> {
        let kind = self.kind;
        if !(2..=255).contains(&self.n0) {
            return Err(Error::config("n0", "must lie in 2..=255"));
        }
        let workers = self.workers.unwrap_or(1);
        if workers == 0 {
            return Err(Error::config("workers", "must be positive"));
        }
        let t_grid = self.grids.t.clone().unwrap_or_else(|| default_t(kind)).check("grids.t")?;
        let r_grid = self
            .grids
            .r
            .clone()
            .unwrap_or_else(|| match kind {
                ExperimentKind::BallStats => powers_of_two(3, 6),
                _ => powers_of_two(4, 10),
            })
            .check_integer("grids.r")?;
        let n_grid = self
            .grids
            .n
            .clone()
            .unwrap_or_else(|| match kind {
                ExperimentKind::GwExact => Grid::Values(vec![1.0, 2.0, 3.0, 4.0]),
                _ => powers_of_two(4, 14),
            })
            .check_integer("grids.n")?;
        let default_envs = match kind {
            ExperimentKind::Oscillations => 50,
            ExperimentKind::Exponents => 200,
            ExperimentKind::BallStats => 20,
            _ => 200,
        };
        let environments = self.counts.environments.unwrap_or(default_envs);
        if environments == 0 {
            return Err(Error::config("counts.environments", "must be positive"));
        }
        if kind == ExperimentKind::HeatKernel && environments < 50 {
            return Err(Error::config("counts.environments", "annealed kernel needs at least 50"));
        }
        let replicas = self.counts.replicas.unwrap_or(1000);
        if replicas == 0 {
            return Err(Error::config("counts.replicas", "must be positive"));
        }
        if kind == ExperimentKind::Exponents && replicas < 1000 {
            return Err(Error::config("counts.replicas", "displacement needs at least 1000 per environment"));
        }
        let max_attempts = self.counts.max_attempts.unwrap_or(10_000_000);
        if max_attempts == 0 {
            return Err(Error::config("counts.max_attempts", "must be positive"));
        }
        if matches!(kind, ExperimentKind::HeatKernel | ExperimentKind::OffDiagonal) && !(t_grid[0] > 0.0) {
            return Err(Error::config("grids.t", "times must be positive for log-log fits"));
        }
        if kind == ExperimentKind::Oscillations && (n_grid[n_grid.len() - 1] as f64) < 1000.0 * n_grid[0] as f64 {
            return Err(Error::config("grids.n", "must span at least three decades"));
        }
        let tol = self.tolerances.kernel.unwrap_or(1e-12);
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::config("tolerances.kernel", "must lie in (0, 1)"));
        }
        let fraction = self.tolerances.correction_fraction.unwrap_or(0.05);
        if !(fraction > 0.0) {
            return Err(Error::config("tolerances.correction_fraction", "must be positive"));
        }
        let policy = self.radius_policy.unwrap_or(RadiusPolicy::CubeRoot { factor: 8.0 });
        policy
            .validate()
            .map_err(|e| Error::config("radius_policy", e.to_string()))?;
        let lambda1 = self.constants.lambda1.unwrap_or(64.0);
        if !(lambda1 >= 1.0) {
            return Err(Error::config("constants.lambda1", "must be >= 1"));
        }
        let c_g3 = self.constants.c_g3.unwrap_or(1.0);
        if !(c_g3 > 0.0) {
            return Err(Error::config("constants.c_g3", "must be positive"));
        }
        let theta_cap = self.constants.theta_cap.unwrap_or(256);
        if theta_cap == 0 {
            return Err(Error::config("constants.theta_cap", "must be positive"));
        }
        let kmax = self.constants.kmax.unwrap_or(64);
        if kmax == 0 || kmax > crate::gw::MAX_PMF_DEGREE {
            return Err(Error::config("constants.kmax", format!("must lie in 1..={}", crate::gw::MAX_PMF_DEGREE)));
        }
        let oscillation_threshold = self.constants.oscillation_threshold.unwrap_or(2.0);
        if !(oscillation_threshold >= 1.0) {
            return Err(Error::config("constants.oscillation_threshold", "must be >= 1"));
        }
        let mut bounds = self.bounds.clone().unwrap_or_default();
        bounds.n0 = self.n0;
        bounds.master_seed = self.master_seed;
        if self.bounds.is_none() {
            bounds.lambda_ladder = (0..5).map(|k| lambda1 * f64::from(1u32 << k)).collect();
        }
        if bounds.radii.is_empty() || bounds.radii.contains(&0) {
            return Err(Error::config("bounds.radii", "must be non-empty and positive"));
        }
        if bounds.exit_radii.is_empty() || bounds.exit_radii.contains(&0) {
            return Err(Error::config("bounds.exit_radii", "must be non-empty and positive"));
        }
        if bounds.lambda_ladder.iter().any(|&l| !(l >= 1.0)) {
            return Err(Error::config("bounds.lambda_ladder", "levels must be >= 1"));
        }
        if bounds.tree_depth == 0 || bounds.good_radius == 0 || !(bounds.kernel_tol > 0.0) {
            return Err(Error::config("bounds", "tree_depth, good_radius and kernel_tol must be positive"));
        }
        Ok(Plan {
            kind,
            name: self.name.clone().unwrap_or_else(|| kind.name().to_string()),
            n0: self.n0,
            master_seed: self.master_seed,
            workers,
            t_grid,
            r_grid,
            n_grid,
            environments,
            replicas,
            max_attempts,
            kernel: KernelOptions { policy, fraction, tol },
            lambda1,
            c_g3,
            theta_cap,
            distance: self.constants.distance.unwrap_or(10),
            kmax,
            oscillation_threshold,
            bounds,
            output: self.output.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let cfg = ExperimentConfig::from_toml(
            r#"
kind = "heat_kernel"
n0 = 2
master_seed = 1
[grids]
t = { geometric = { lo = 100.0, hi = 10000.0, points = 12 } }
[counts]
environments = 200
[radius_policy]
kind = "cube_root"
factor = 8.0
[output]
dir = "results"
format = "json-lines"
"#,
        )
        .unwrap();
        let plan = cfg.plan().unwrap();
        assert_eq!(plan.t_grid.len(), 12);
        assert_eq!(plan.output.format, OutputFormat::JsonLines);
        assert_eq!(plan.kernel.policy, RadiusPolicy::CubeRoot { factor: 8.0 });
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_toml("kind = \"volume\"").unwrap_err();
        assert!(matches!(err, Error::ConfigInvalid { .. }));
        let err = ExperimentConfig::from_toml("kind = \"exponents\"\n[counts]\nenviroments = 3\n").unwrap_err();
        assert!(err.to_string().contains("enviroments"), "{err}");
    }

    #[test]
    fn zero_environments_rejected_with_field() {
        let cfg = ExperimentConfig::from_toml("kind = \"exponents\"\n[counts]\nenvironments = 0\n").unwrap();
        match cfg.plan().unwrap_err() {
            Error::ConfigInvalid { field, .. } => assert_eq!(field, "counts.environments"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unsorted_grid_rejected() {
        let cfg = ExperimentConfig::from_toml("kind = \"exponents\"\n[grids]\nt = [10.0, 5.0]\n").unwrap();
        match cfg.plan().unwrap_err() {
            Error::ConfigInvalid { field, .. } => assert_eq!(field, "grids.t"),
            e => panic!("{e}"),
        }
        let cfg = ExperimentConfig::from_toml("kind = \"ball_stats\"\n[grids]\nr = [1.5, 5.0]\n").unwrap();
        assert!(cfg.plan().is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::OffDiagonal);
        cfg.grids.t = Some(Grid::Values(vec![1.0, 2.0]));
        cfg.radius_policy = Some(RadiusPolicy::Fixed { radius: 9 });
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}
