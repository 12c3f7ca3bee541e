//! Pooling and slope fitting. Environments are the independent unit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean and standard error in input order.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64 / n as f64).sqrt())
}

/// Order-independent accumulator. Samples are keyed by `(unit, replica)`
/// and pooled in key order, so any partition of the work merges to the
/// same bits.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    entries: Vec<(u64, u64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pooled {
    pub count: usize,
    pub mean: f64,
    pub std_error: f64,
}

impl Tally {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, unit: u64, replica: u64, value: f64) {
        self.entries.push((unit, replica, value));
    }

    pub fn merge(mut self, mut other: Tally) -> Tally {
        self.entries.append(&mut other.entries);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn finalize(mut self) -> Pooled {
        self.entries
            .sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
        let values: Vec<f64> = self.entries.iter().map(|e| e.2).collect();
        let (mean, std_error) = mean_se(&values);
        Pooled {
            count: values.len(),
            mean,
            std_error,
        }
    }
}

/// Weighted least squares `y ≈ a + b x`; returns `(b, a)`.
pub fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() != w.len() || x.len() < 2 {
        return Err(Error::domain("line fit needs at least two matched points"));
    }
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..x.len() {
        sxx += w[i] * (x[i] - mx).powi(2);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::domain("line fit needs distinct abscissae"));
    }
    let b = sxy / sxx;
    Ok((b, my - b * mx))
}

/// Pearson correlation.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
        sxy += (a - mx) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Log-log power-law fit of environment means over a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub grid: Vec<f64>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Jackknife standard error of the slope over environments.
    pub slope_se: f64,
    /// 95% interval.
    pub slope_ci: (f64, f64),
    pub environments: usize,
}

const Z95: f64 = 1.959_963_984_540_054;

fn loglog_slope(grid: &[f64], sums: &[f64], sqs: &[f64], n: f64) -> Result<(f64, f64)> {
    let mut x = Vec::with_capacity(grid.len());
    let mut y = Vec::with_capacity(grid.len());
    let mut w = Vec::with_capacity(grid.len());
    let mut weighted = true;
    for i in 0..grid.len() {
        let mean = sums[i] / n;
        if !(mean > 0.0) {
            return Err(Error::domain(format!(
                "log-log fit needs positive means, got {mean} at grid point {}",
                grid[i]
            )));
        }
        let var = if n > 1.0 {
            ((sqs[i] - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        let rel = (var / n).sqrt() / mean;
        if !(rel > 0.0) {
            weighted = false;
        }
        x.push(grid[i].ln());
        y.push(mean.ln());
        w.push(1.0 / (rel * rel));
    }
    if !weighted {
        w.iter_mut().for_each(|v| *v = 1.0);
    }
    weighted_line(&x, &y, &w)
}

impl ExponentFit {
    /// `per_env[e][i]` is the value of environment `e` at `grid[i]`.
    pub fn from_samples(grid: &[f64], per_env: &[Vec<f64>]) -> Result<Self> {
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[0] < w[1])) || !(grid[0] > 0.0) {
            return Err(Error::domain("grid must be positive and strictly increasing with >= 2 points"));
        }
        if per_env.is_empty() || per_env.iter().any(|v| v.len() != grid.len()) {
            return Err(Error::domain("every environment needs one value per grid point"));
        }
        let g = grid.len();
        let n = per_env.len();
        let mut sums = vec![0.0; g];
        let mut sqs = vec![0.0; g];
        for row in per_env {
            for i in 0..g {
                sums[i] += row[i];
                sqs[i] += row[i] * row[i];
            }
        }
        let mut estimates = Vec::with_capacity(g);
        let mut std_errors = Vec::with_capacity(g);
        for i in 0..g {
            let col: Vec<f64> = per_env.iter().map(|r| r[i]).collect();
            let (m, se) = mean_se(&col);
            estimates.push(m);
            std_errors.push(se);
        }
        let (slope, intercept) = loglog_slope(grid, &sums, &sqs, n as f64)?;
        let slope_se = if n > 2 {
            let mut loo = Vec::with_capacity(n);
            for row in per_env {
                let s: Vec<f64> = (0..g).map(|i| sums[i] - row[i]).collect();
                let q: Vec<f64> = (0..g).map(|i| sqs[i] - row[i] * row[i]).collect();
                loo.push(loglog_slope(grid, &s, &q, (n - 1) as f64)?.0);
            }
            let m = loo.iter().sum::<f64>() / n as f64;
            ((n - 1) as f64 / n as f64 * loo.iter().map(|s| (s - m).powi(2)).sum::<f64>()).sqrt()
        } else {
            0.0
        };
        Ok(ExponentFit {
            grid: grid.to_vec(),
            estimates,
            std_errors,
            slope,
            intercept,
            slope_se,
            slope_ci: (slope - Z95 * slope_se, slope + Z95 * slope_se),
            environments: n,
        })
    }
}

/// Geometric grid of `points` values from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (points - 1) as f64;
    (0..points)
        .map(|i| if i + 1 == points { hi } else { lo * (ratio * i as f64).exp() })
        .collect()
}
