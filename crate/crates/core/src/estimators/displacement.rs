use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::check_times;
use super::stats::ExponentFit;
use crate::env::{Environment, LazyCluster};
use crate::error::{Error, Result};
use crate::stream::{env_seed, walk_rng};
use crate::walk::displacement_at_times;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementFit {
    /// Fit of `Ē E d(0, Y_t)`.
    pub mean: ExponentFit,
    /// Fit of `Ē E sup_{s ≤ t} d(0, Y_s)`.
    pub sup: ExponentFit,
    /// `E d ≤ E sup d` on every environment and grid point.
    pub ordering_holds: bool,
    pub replicas: usize,
    pub env_seeds: Vec<u64>,
    pub per_env: Vec<EnvDisplacement>,
}

/// Quenched displacement moments of one environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvDisplacement {
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub sup: Vec<f64>,
    pub sup_se: Vec<f64>,
}

fn moments(sum: &[u64], sq: &[u64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let nf = n as f64;
    sum.iter()
        .zip(sq)
        .map(|(&s, &q)| {
            let m = s as f64 / nf;
            let var = if n > 1 { ((q as f64 - nf * m * m) / (nf - 1.0)).max(0.0) } else { 0.0 };
            (m, (var / nf).sqrt())
        })
        .unzip()
}

/// Means of `d(0, Y_t)` and its running maximum over `replicas` walks.
/// Sums are kept in integers, so the result does not depend on order.
pub fn displacement_means(
    n0: u32,
    seed: u64,
    master_seed: u64,
    env_index: u64,
    t_grid: &[f64],
    replicas: usize,
) -> Result<EnvDisplacement> {
    let env = Environment::new(n0, seed)?;
    let mut cluster = LazyCluster::new(&env);
    let g = t_grid.len();
    let (mut dsum, mut dsq, mut ssum, mut ssq) = (vec![0u64; g], vec![0u64; g], vec![0u64; g], vec![0u64; g]);
    for j in 0..replicas as u64 {
        let mut rng = walk_rng(master_seed, env_index, j);
        for (i, (d, s)) in displacement_at_times(&mut cluster, 0, t_grid, &mut rng)?
            .into_iter()
            .enumerate()
        {
            let (d, s) = (d as u64, s as u64);
            dsum[i] += d;
            dsq[i] += d * d;
            ssum[i] += s;
            ssq[i] += s * s;
        }
    }
    let (mean, mean_se) = moments(&dsum, &dsq, replicas);
    let (sup, sup_se) = moments(&ssum, &ssq, replicas);
    Ok(EnvDisplacement { mean, mean_se, sup, sup_se })
}

/// Displacement exponent from walks started at the root.
pub fn displacement_exponent(
    n0: u32,
    t_grid: &[f64],
    n_envs: usize,
    replicas: usize,
    master_seed: u64,
) -> Result<DisplacementFit> {
    if replicas < 1000 {
        return Err(Error::domain(format!("need at least 1000 replicas per environment, got {replicas}")));
    }
    if n_envs == 0 {
        return Err(Error::domain("need at least one environment"));
    }
    check_times(t_grid)?;
    let env_seeds: Vec<u64> = (0..n_envs as u64).map(|i| env_seed(master_seed, i)).collect();
    let per_env: Vec<EnvDisplacement> = env_seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| displacement_means(n0, s, master_seed, i as u64, t_grid, replicas))
        .collect::<Result<_>>()?;
    let ordering_holds = per_env
        .iter()
        .all(|e| e.mean.iter().zip(&e.sup).all(|(a, b)| a <= b));
    let d: Vec<Vec<f64>> = per_env.iter().map(|e| e.mean.clone()).collect();
    let s: Vec<Vec<f64>> = per_env.iter().map(|e| e.sup.clone()).collect();
    Ok(DisplacementFit {
        mean: ExponentFit::from_samples(t_grid, &d)?,
        sup: ExponentFit::from_samples(t_grid, &s)?,
        ordering_holds,
        replicas,
        env_seeds,
        per_env,
    })
}
