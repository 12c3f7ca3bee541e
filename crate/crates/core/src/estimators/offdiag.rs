use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{check_times, pair_kernel, KernelOptions};
use super::stats::{correlation, mean_se, weighted_line};
use crate::env::{contains, Environment, VertexLabel};
use crate::error::{Error, Result};
use crate::stream::{derive_stream, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffDiagPoint {
    pub t: f64,
    /// `(R³/t)^{1/2}`.
    pub scaled_distance: f64,
    pub mean: f64,
    pub std_error: f64,
    /// `log Ē q_t(x, y) + (2/3) log t`.
    pub profile: f64,
    pub max_correction_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffDiagProfile {
    pub distance: u32,
    pub target: String,
    pub points: Vec<OffDiagPoint>,
    pub accepted: usize,
    pub attempts: u64,
    /// `accepted / attempts`.
    pub efficiency: f64,
    /// Line through the points with `t ≤ R³` (absent with fewer than 3).
    pub decay_slope: Option<f64>,
    pub decay_intercept: Option<f64>,
    pub decay_correlation: Option<f64>,
    pub env_seeds: Vec<u64>,
}

/// Annealed profile of `q_t(0, y)` for the fixed vertex `y = (1, …, 1)` at
/// distance `R`, conditioned on `y ∈ G` by rejection over environment seeds.
pub fn offdiag_profile(
    n0: u32,
    distance: u32,
    t_grid: &[f64],
    n_envs: usize,
    master_seed: u64,
    max_attempts: u64,
    opts: &KernelOptions,
) -> Result<OffDiagProfile> {
    check_times(t_grid)?;
    if !(t_grid[0] > 0.0) || n_envs < 2 {
        return Err(Error::domain("profile needs positive times and at least 2 environments"));
    }
    let target = VertexLabel::new(vec![1; distance as usize])?;
    let mut env_seeds = Vec::with_capacity(n_envs);
    let mut attempts = 0u64;
    while env_seeds.len() < n_envs && attempts < max_attempts {
        let seed = derive_stream(master_seed, Purpose::Conditioning, attempts).seed64();
        attempts += 1;
        if contains(&Environment::new(n0, seed)?, &target) {
            env_seeds.push(seed);
        }
    }
    if env_seeds.len() < n_envs {
        return Err(Error::InsufficientPairs {
            accepted: env_seeds.len(),
            requested: n_envs,
            attempts,
        });
    }
    let per_env: Vec<Vec<_>> = env_seeds
        .par_iter()
        .map(|&s| pair_kernel(&Environment::new(n0, s)?, &VertexLabel::root(), &target, t_grid, opts))
        .collect::<Result<_>>()?;
    let r3 = (distance as f64).powi(3);
    let points: Vec<OffDiagPoint> = t_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let col: Vec<f64> = per_env.iter().map(|row| row[i].killed).collect();
            let (mean, std_error) = mean_se(&col);
            OffDiagPoint {
                t,
                scaled_distance: (r3 / t).sqrt(),
                mean,
                std_error,
                profile: mean.ln() + 2.0 / 3.0 * t.ln(),
                max_correction_ratio: per_env
                    .iter()
                    .map(|row| row[i].correction / row[i].killed)
                    .fold(0.0, f64::max),
            }
        })
        .collect();
    let decay: Vec<&OffDiagPoint> = points
        .iter()
        .filter(|p| p.t <= r3 && p.mean > 0.0)
        .collect();
    let (decay_slope, decay_intercept, decay_correlation) = if decay.len() >= 3 {
        let x: Vec<f64> = decay.iter().map(|p| p.scaled_distance).collect();
        let y: Vec<f64> = decay.iter().map(|p| p.profile).collect();
        let (b, a) = weighted_line(&x, &y, &vec![1.0; x.len()])?;
        (Some(b), Some(a), Some(correlation(&x, &y)))
    } else {
        (None, None, None)
    };
    Ok(OffDiagProfile {
        distance,
        target: target.to_string(),
        points,
        accepted: env_seeds.len(),
        attempts,
        efficiency: env_seeds.len() as f64 / attempts as f64,
        decay_slope,
        decay_intercept,
        decay_correlation,
        env_seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::kernel::RadiusPolicy;

    fn opts() -> KernelOptions {
        KernelOptions {
            policy: RadiusPolicy::CubeRoot { factor: 6.0 },
            ..Default::default()
        }
    }

    #[test]
    fn zero_distance_accepts_everything() {
        let p = offdiag_profile(2, 0, &[2.0, 8.0], 4, 1, 10, &opts()).unwrap();
        assert_eq!(p.attempts, 4);
        assert_eq!(p.efficiency, 1.0);
        assert!(p.decay_slope.is_none());
    }

    #[test]
    fn starved_conditioning_is_an_error() {
        let err = offdiag_profile(2, 20, &[1.0], 5, 1, 100, &opts()).unwrap_err();
        assert!(matches!(err, Error::InsufficientPairs { requested: 5, .. }));
    }

    #[test]
    fn profile_decays_with_scaled_distance() {
        let grid = [4.0, 8.0, 16.0, 32.0, 64.0];
        let p = offdiag_profile(2, 4, &grid, 30, 2, 100_000, &opts()).unwrap();
        assert!(p.decay_slope.unwrap() < 0.0);
        assert!(p.points.iter().all(|q| q.mean > 0.0));
    }
}
