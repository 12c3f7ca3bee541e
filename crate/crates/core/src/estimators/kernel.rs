//! On-diagonal heat kernel estimates from the killed kernel on a ball.
//!
//! With `ε_z = P^z(τ_B ≤ t)`, the strong Markov property at `τ_B` and the
//! symmetry `q_s(z, y) = P^y(Y_s = z)/μ_z ≤ ε_y` give
//! `0 ≤ q_t(x, y) - q^B_t(x, y) ≤ ε_x ε_y`, which is the reported correction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::ExponentFit;
use crate::env::{ClusterSource, Environment, LazyCluster, VertexLabel};
use crate::error::{Error, Result};
use crate::resist::{heat_kernel_rows, interior_mask, WeightedTree};
use crate::stream::env_seed;

/// How the truncation radius grows with the largest requested time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadiusPolicy {
    /// `⌈8 t^{1/3} log(1 + t)⌉`.
    LogCubeRoot,
    /// `⌈factor · t^{1/3}⌉`.
    CubeRoot { factor: f64 },
    Fixed { radius: u32 },
}

impl RadiusPolicy {
    pub fn radius(&self, t_max: f64) -> u32 {
        let r = match *self {
            RadiusPolicy::LogCubeRoot => (8.0 * t_max.cbrt() * t_max.ln_1p()).ceil(),
            RadiusPolicy::CubeRoot { factor } => (factor * t_max.cbrt()).ceil(),
            RadiusPolicy::Fixed { radius } => radius as f64,
        };
        (r as u32).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RadiusPolicy::CubeRoot { factor } if !(factor > 0.0) => {
                Err(Error::domain("radius factor must be positive"))
            }
            RadiusPolicy::Fixed { radius: 0 } => Err(Error::domain("fixed radius must be positive")),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    pub policy: RadiusPolicy,
    /// Largest admissible correction as a fraction of the killed value.
    pub fraction: f64,
    /// Uniformization tail tolerance.
    pub tol: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            policy: RadiusPolicy::LogCubeRoot,
            fraction: 0.05,
            tol: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub t: f64,
    /// `q^B_t(x, y)`, exact up to the uniformization tolerance.
    pub killed: f64,
    /// Upper bound on `q_t(x, y) - q^B_t(x, y)`.
    pub correction: f64,
    /// `P^x(τ_B ≤ t)`.
    pub escape: f64,
    pub radius: u32,
}

impl KernelEstimate {
    pub fn upper(&self) -> f64 {
        self.killed + self.correction
    }
}

pub(crate) fn check_times(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty()
        || t_grid.iter().any(|&t| !(t >= 0.0) || !t.is_finite())
        || t_grid.windows(2).any(|w| !(w[0] < w[1]))
    {
        return Err(Error::domain("time grid must be finite, nonnegative and strictly increasing"));
    }
    Ok(())
}

/// Kernel estimates `q_t(x, y)` for a pair in the same cluster, truncated
/// to `B(x, R)` with `R` from the policy (at least `d(x, y)`).
pub fn pair_kernel<S: ClusterSource + ?Sized>(
    src: &S,
    x: &VertexLabel,
    y: &VertexLabel,
    t_grid: &[f64],
    opts: &KernelOptions,
) -> Result<Vec<KernelEstimate>> {
    check_times(t_grid)?;
    opts.policy.validate()?;
    let t_max = *t_grid.last().expect("non-empty");
    let mut cluster = LazyCluster::new(src);
    let xv = cluster.locate(x)?;
    let yv = cluster.locate(y)?;
    let radius = opts.policy.radius(t_max).max(cluster.distance(xv, yv));
    let ball = cluster.explore_ball(xv, radius);
    let tree = WeightedTree::from_ball(&ball)?;
    let alive = interior_mask(tree.len(), ball.len());
    let yi = ball.position(yv).expect("target lies inside the ball");
    let from_x = heat_kernel_rows(&tree, &alive, 0, t_grid, opts.tol)?;
    let from_y = if yi == 0 {
        None
    } else {
        Some(heat_kernel_rows(&tree, &alive, yi, t_grid, opts.tol)?)
    };
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let ex = (1.0 - from_x.survival[i]).max(0.0);
            let ey = from_y.as_ref().map_or(ex, |r| (1.0 - r.survival[i]).max(0.0));
            KernelEstimate {
                t,
                killed: from_x.rows[i][yi],
                correction: ex * ey,
                escape: ex,
                radius,
            }
        })
        .collect())
}

/// `q_t(x, x)` along the grid, signalling a radius that is too small.
pub fn quenched_heat_kernel<S: ClusterSource + ?Sized>(
    src: &S,
    x: &VertexLabel,
    t_grid: &[f64],
    opts: &KernelOptions,
) -> Result<Vec<KernelEstimate>> {
    let est = pair_kernel(src, x, x, t_grid, opts)?;
    for e in &est {
        if e.correction > opts.fraction * e.killed {
            return Err(Error::RadiusTooSmall {
                radius: e.radius,
                t: e.t,
                killed: e.killed,
                correction: e.correction,
                fraction: opts.fraction,
            });
        }
    }
    Ok(est)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealedKernel {
    /// Fit of the environment-averaged killed kernel at the root.
    pub fit: ExponentFit,
    /// `-2 ×` slope.
    pub spectral_dimension: f64,
    pub spectral_ci: (f64, f64),
    /// Range of `t^{2/3} Ē q_t` over the grid.
    pub scaled_range: (f64, f64),
    /// Largest correction relative to its killed value.
    pub max_correction_ratio: f64,
    pub env_seeds: Vec<u64>,
    pub per_env: Vec<Vec<KernelEstimate>>,
}

/// Annealed on-diagonal kernel at the root over `n_envs` environments.
pub fn annealed_heat_kernel(
    n0: u32,
    t_grid: &[f64],
    n_envs: usize,
    master_seed: u64,
    opts: &KernelOptions,
) -> Result<AnnealedKernel> {
    if n_envs < 50 {
        return Err(Error::domain(format!("annealed estimates need at least 50 environments, got {n_envs}")));
    }
    check_times(t_grid)?;
    if !(t_grid[0] > 0.0) {
        return Err(Error::domain("annealed fit needs positive times"));
    }
    let env_seeds: Vec<u64> = (0..n_envs as u64).map(|i| env_seed(master_seed, i)).collect();
    let per_env: Vec<Vec<KernelEstimate>> = env_seeds
        .par_iter()
        .map(|&s| {
            let env = Environment::new(n0, s)?;
            quenched_heat_kernel(&env, &VertexLabel::root(), t_grid, opts)
        })
        .collect::<Result<_>>()?;
    let values: Vec<Vec<f64>> = per_env
        .iter()
        .map(|row| row.iter().map(|e| e.killed).collect())
        .collect();
    let fit = ExponentFit::from_samples(t_grid, &values)?;
    let scaled: Vec<f64> = fit
        .estimates
        .iter()
        .zip(t_grid)
        .map(|(q, t)| q * t.powf(2.0 / 3.0))
        .collect();
    let max_correction_ratio = per_env
        .iter()
        .flatten()
        .map(|e| e.correction / e.killed)
        .fold(0.0, f64::max);
    Ok(AnnealedKernel {
        spectral_dimension: -2.0 * fit.slope,
        spectral_ci: (-2.0 * fit.slope_ci.1, -2.0 * fit.slope_ci.0),
        scaled_range: (
            scaled.iter().copied().fold(f64::INFINITY, f64::min),
            scaled.iter().copied().fold(0.0, f64::max),
        ),
        max_correction_ratio,
        fit,
        env_seeds,
        per_env,
    })
}
