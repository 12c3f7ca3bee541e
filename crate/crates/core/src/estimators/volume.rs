use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{weighted_line, ExponentFit};
use crate::env::{volume_profile, Environment, VertexLabel};
use crate::error::{Error, Result};
use crate::stream::env_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeFit {
    pub fit: ExponentFit,
    pub r_grid: Vec<u32>,
    /// `V(0, r)` per environment and grid point.
    pub volumes: Vec<Vec<u64>>,
    pub env_seeds: Vec<u64>,
}

/// Pooled frequencies of `V(0, r) > λ r²` and `V(0, r) < λ r²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFrequency {
    pub lambda: f64,
    pub upper: f64,
    pub lower: f64,
}

pub(crate) fn check_radii(r_grid: &[u32]) -> Result<()> {
    if r_grid.is_empty() || r_grid[0] == 0 || r_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("radius grid must be positive and strictly increasing"));
    }
    Ok(())
}

pub fn volume_exponent(n0: u32, r_grid: &[u32], n_envs: usize, master_seed: u64) -> Result<VolumeFit> {
    check_radii(r_grid)?;
    if n_envs == 0 {
        return Err(Error::domain("need at least one environment"));
    }
    let r_max = *r_grid.last().expect("non-empty");
    let env_seeds: Vec<u64> = (0..n_envs as u64).map(|i| env_seed(master_seed, i)).collect();
    let volumes: Vec<Vec<u64>> = env_seeds
        .par_iter()
        .map(|&s| {
            let env = Environment::new(n0, s)?;
            let cum = volume_profile(&env, &VertexLabel::root(), r_max)?.cumulative_volumes();
            Ok(r_grid.iter().map(|&r| cum[r as usize]).collect())
        })
        .collect::<Result<_>>()?;
    let grid: Vec<f64> = r_grid.iter().map(|&r| r as f64).collect();
    let values: Vec<Vec<f64>> = volumes
        .iter()
        .map(|v| v.iter().map(|&x| x as f64).collect())
        .collect();
    Ok(VolumeFit {
        fit: ExponentFit::from_samples(&grid, &values)?,
        r_grid: r_grid.to_vec(),
        volumes,
        env_seeds,
    })
}

impl VolumeFit {
    pub fn tail_frequencies(&self, lambdas: &[f64]) -> Vec<TailFrequency> {
        let total = (self.volumes.len() * self.r_grid.len()) as f64;
        lambdas
            .iter()
            .map(|&lambda| {
                let mut upper = 0usize;
                let mut lower = 0usize;
                for row in &self.volumes {
                    for (&v, &r) in row.iter().zip(&self.r_grid) {
                        let scale = lambda * (r as f64).powi(2);
                        upper += (v as f64 > scale) as usize;
                        lower += ((v as f64) < scale) as usize;
                    }
                }
                TailFrequency {
                    lambda,
                    upper: upper as f64 / total,
                    lower: lower as f64 / total,
                }
            })
            .collect()
    }
}

/// Exponent `a` in `P(V < λ r²) ≈ exp(-c λ^{-a})`, from the slope of
/// `log(-log P)` against `log(1/λ)` over tails with `0 < P < 1`.
pub fn lower_tail_exponent(tails: &[TailFrequency]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = tails
        .iter()
        .filter(|t| t.lower > 0.0 && t.lower < 1.0)
        .map(|t| ((1.0 / t.lambda).ln(), (-t.lower.ln()).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    weighted_line(&x, &y, &vec![1.0; x.len()]).ok().map(|(b, _)| b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_tails() {
        let fit = volume_exponent(2, &[4, 8, 16, 32], 40, 1).unwrap();
        let tails = fit.tail_frequencies(&[0.05, 0.1, 4.0, 8.0]);
        assert!(tails[3].upper <= tails[2].upper);
        assert!(tails[0].lower <= tails[1].lower);
        assert!(fit.fit.slope > 1.0);
        for row in &fit.volumes {
            assert!(row.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn rejects_unsorted_radii() {
        assert!(volume_exponent(2, &[4, 4], 2, 0).is_err());
        assert!(volume_exponent(2, &[0, 4], 2, 0).is_err());
    }
}
