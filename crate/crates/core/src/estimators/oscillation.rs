use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{pair_kernel, KernelOptions};
use super::volume::check_radii;
use crate::env::{volume_profile, ClusterSource, Environment, VertexLabel};
use crate::error::{Error, Result};
use crate::stream::env_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledKernel {
    pub n: u32,
    /// `t = n V(0, n)`.
    pub t: f64,
    /// `t^{2/3} q^B_t(0, 0)`.
    pub scaled: f64,
    pub correction_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationSeries {
    pub grid: Vec<u32>,
    /// `V(0, n) / n²`.
    pub ratios: Vec<f64>,
    pub max_min_ratio: f64,
    pub monotone: bool,
    /// Grid points whose time scale fits under the kernel cap.
    pub kernel: Vec<ScaledKernel>,
}

fn check_span(n_grid: &[u32]) -> Result<()> {
    check_radii(n_grid)?;
    if (*n_grid.last().expect("non-empty") as f64) < 1000.0 * n_grid[0] as f64 {
        return Err(Error::domain("oscillation grid must span at least three decades"));
    }
    Ok(())
}

/// `V(0, n)/n²` along the grid; kernel values where `n V(0, n) ≤ t_cap`.
pub fn oscillation_scan<S: ClusterSource + ?Sized>(
    src: &S,
    n_grid: &[u32],
    kernel: Option<(&KernelOptions, f64)>,
) -> Result<OscillationSeries> {
    check_span(n_grid)?;
    let root = VertexLabel::root();
    let cum = volume_profile(src, &root, *n_grid.last().expect("non-empty"))?.cumulative_volumes();
    let ratios: Vec<f64> = n_grid
        .iter()
        .map(|&n| cum[n as usize] as f64 / (n as f64).powi(2))
        .collect();
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let up = ratios.windows(2).all(|w| w[0] <= w[1]);
    let down = ratios.windows(2).all(|w| w[0] >= w[1]);
    let mut scaled = Vec::new();
    if let Some((opts, t_cap)) = kernel {
        let pts: Vec<(u32, f64)> = n_grid
            .iter()
            .map(|&n| (n, n as f64 * cum[n as usize] as f64))
            .filter(|&(_, t)| t <= t_cap)
            .collect();
        if !pts.is_empty() {
            let times: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let est = pair_kernel(src, &root, &root, &times, opts)?;
            scaled = pts
                .iter()
                .zip(&est)
                .map(|(&(n, t), e)| ScaledKernel {
                    n,
                    t,
                    scaled: t.powf(2.0 / 3.0) * e.killed,
                    correction_ratio: e.correction / e.killed,
                })
                .collect();
        }
    }
    Ok(OscillationSeries {
        grid: n_grid.to_vec(),
        ratios,
        max_min_ratio: max / min,
        monotone: up || down,
        kernel: scaled,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationSummary {
    pub env_seeds: Vec<u64>,
    pub series: Vec<OscillationSeries>,
    /// Fraction of environments whose max/min ratio exceeds `threshold`.
    pub fraction_above: f64,
    pub threshold: f64,
}

pub fn scan_environments(
    n0: u32,
    n_grid: &[u32],
    n_envs: usize,
    master_seed: u64,
    threshold: f64,
    kernel: Option<(&KernelOptions, f64)>,
) -> Result<OscillationSummary> {
    if n_envs == 0 {
        return Err(Error::domain("need at least one environment"));
    }
    let env_seeds: Vec<u64> = (0..n_envs as u64).map(|i| env_seed(master_seed, i)).collect();
    let series: Vec<OscillationSeries> = env_seeds
        .par_iter()
        .map(|&s| oscillation_scan(&Environment::new(n0, s)?, n_grid, kernel))
        .collect::<Result<_>>()?;
    let above = series.iter().filter(|s| s.max_min_ratio > threshold).count();
    Ok(OscillationSummary {
        fraction_above: above as f64 / n_envs as f64,
        threshold,
        env_seeds,
        series,
    })
}
