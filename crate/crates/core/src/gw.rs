//! Critical Galton-Watson process with `Bin(n0, 1/n0)` offspring.
//!
//! Generating functions, their iterates and log-tilts, exact truncated pmfs
//! of generation sizes and total progeny (plain and with the thinned first
//! generation that off-backbone bushes of the IIC follow), and a sampler.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest truncation degree accepted by [`exact_pmf`].
pub const MAX_PMF_DEGREE: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OffspringLaw {
    n0: u32,
}

impl OffspringLaw {
    pub fn new(n0: u32) -> Result<Self> {
        if !(2..=255).contains(&n0) {
            return Err(Error::domain(format!("n0 must lie in 2..=255, got {n0}")));
        }
        Ok(Self { n0 })
    }

    pub fn n0(&self) -> u32 {
        self.n0
    }

    /// Per-edge open probability `1/n0`.
    pub fn p(&self) -> f64 {
        1.0 / self.n0 as f64
    }

    /// Offspring variance, equal to `f''(1)`.
    pub fn variance(&self) -> f64 {
        (self.n0 - 1) as f64 / self.n0 as f64
    }

    /// Limit of `n P(X_n > 0)`.
    pub fn survival_constant(&self) -> f64 {
        2.0 / self.variance()
    }

    #[inline]
    fn f(&self, s: f64) -> f64 {
        let n0 = self.n0 as f64;
        ((s + n0 - 1.0) / n0).powi(self.n0 as i32)
    }

    #[inline]
    fn f_modified(&self, s: f64) -> f64 {
        let n0 = self.n0 as f64;
        ((s + n0 - 1.0) / n0).powi(self.n0 as i32 - 1)
    }
}

fn check_unit(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::domain(format!("pgf argument {s} outside [0,1]")));
    }
    Ok(())
}

/// `f(s) = n0^{-n0} (s + n0 - 1)^{n0}`.
pub fn offspring_pgf(law: OffspringLaw, s: f64) -> Result<f64> {
    check_unit(s)?;
    Ok(law.f(s))
}

/// `f_n(s)`, the pgf of the n-th generation size.
pub fn pgf_iterate(law: OffspringLaw, n: usize, s: f64) -> Result<f64> {
    check_unit(s)?;
    Ok((0..n).fold(s, |acc, _| law.f(acc)))
}

/// Pgf of the modified generation size: `f~(f_{n-1}(s))`, with `f~` the
/// pgf of `Bin(n0 - 1, 1/n0)`.
pub fn modified_pgf_iterate(law: OffspringLaw, n: usize, s: f64) -> Result<f64> {
    check_unit(s)?;
    if n == 0 {
        return Ok(s);
    }
    Ok(law.f_modified(pgf_iterate(law, n - 1, s)?))
}

/// `P(X_n > 0) = 1 - f_n(0)`.
pub fn survival_prob(law: OffspringLaw, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("survival_prob needs n >= 1"));
    }
    // Track the survival probability directly: 1 - f(1 - q) loses no digits as q -> 0.
    let n0 = law.n0 as f64;
    let mut q = 1.0_f64;
    for _ in 0..n {
        let base = 1.0 - q / n0;
        q = -(n0 * base.ln()).exp_m1();
    }
    Ok(q)
}

/// `g_n(s)`, the pgf of the total progeny `Y_n = X_0 + ... + X_n`.
pub fn progeny_pgf(law: OffspringLaw, n: usize, s: f64) -> Result<f64> {
    check_unit(s)?;
    Ok((0..n).fold(s, |acc, _| s * law.f(acc)))
}

/// Log moment generating functions at a non-negative tilt.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltedValue {
    pub theta: f64,
    /// `h_n(theta) = log g_n(e^theta)`.
    pub h: f64,
    /// `k_n(theta) = log f_n(e^theta)`.
    pub k: f64,
}

/// Evaluate `h_n` and `k_n` by their exact log-space recursions.
///
/// Fails with [`Error::Overflow`] rather than clamping when either tilted
/// value leaves the representable range.
pub fn log_mgfs(law: OffspringLaw, n: usize, theta: f64) -> Result<TiltedValue> {
    Ok(TiltedValue {
        theta,
        h: log_progeny_mgf(law, n, theta)?,
        k: log_level_mgf(law, n, theta)?,
    })
}

fn check_tilt(theta: f64) -> Result<()> {
    if !theta.is_finite() || theta < 0.0 {
        return Err(Error::domain(format!("tilt must be finite and >= 0, got {theta}")));
    }
    Ok(())
}

// Past this the next exp() step would overflow.
const TILT_CEILING: f64 = 700.0;

/// `h_n(theta) = log g_n(e^theta)`.
pub fn log_progeny_mgf(law: OffspringLaw, n: usize, theta: f64) -> Result<f64> {
    check_tilt(theta)?;
    let n0 = law.n0 as f64;
    let mut h = theta;
    for step in 0..n {
        // exp_m1/ln_1p keep full precision at the tiny tilts the bounds live at.
        h = theta + n0 * (h.exp_m1() / n0).ln_1p();
        if !h.is_finite() || h > TILT_CEILING {
            return Err(Error::Overflow { n: step + 1, theta });
        }
    }
    Ok(h)
}

/// `k_n(theta) = log f_n(e^theta)`.
pub fn log_level_mgf(law: OffspringLaw, n: usize, theta: f64) -> Result<f64> {
    check_tilt(theta)?;
    let n0 = law.n0 as f64;
    let mut k = theta;
    for step in 0..n {
        k = n0 * (k.exp_m1() / n0).ln_1p();
        if !k.is_finite() || k > TILT_CEILING {
            return Err(Error::Overflow { n: step + 1, theta });
        }
    }
    Ok(k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmfKind {
    /// `X_n`
    Level,
    /// `Y_n`
    Progeny,
    /// `X~_n`: first generation thinned to `Bin(n0 - 1, 1/n0)`.
    ModifiedLevel,
    /// `Y~_n`
    ModifiedProgeny,
}

/// Probability weights on `0..=kmax` plus the mass that fell beyond.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgfSeries {
    pub coefficients: Vec<f64>,
    pub truncation_mass: f64,
}

impl PgfSeries {
    pub fn kmax(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.coefficients.get(k).copied().unwrap_or(0.0)
    }

    /// `P(Z <= k)`, exact for `k <= kmax`.
    pub fn cdf(&self, k: usize) -> f64 {
        let upto = k.min(self.kmax());
        self.coefficients[..=upto].iter().sum()
    }

    /// `P(Z >= k)`, exact for `k <= kmax + 1`.
    pub fn tail(&self, k: usize) -> f64 {
        if k == 0 {
            return 1.0;
        }
        let below: f64 = self.coefficients.iter().take(k).sum();
        (1.0 - below).max(0.0)
    }

    pub fn mean_lower_bound(&self) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// Law of the sum of `m` independent copies, truncated at the same degree.
    pub fn convolution_power(&self, m: usize) -> PgfSeries {
        let kmax = self.kmax();
        let mut acc = vec![0.0; kmax + 1];
        acc[0] = 1.0;
        for _ in 0..m {
            acc = poly_mul_trunc(&acc, &self.coefficients, kmax);
        }
        finish_series(acc)
    }

    /// True when `self` is stochastically dominated by `other`
    /// (`P(self <= k) >= P(other <= k)` for every `k` up to the common degree).
    pub fn dominated_by(&self, other: &PgfSeries, tol: f64) -> bool {
        let kmax = self.kmax().min(other.kmax());
        let mut a = 0.0;
        let mut b = 0.0;
        for k in 0..=kmax {
            a += self.prob(k);
            b += other.prob(k);
            if a + tol < b {
                return false;
            }
        }
        true
    }
}

fn poly_mul_trunc(a: &[f64], b: &[f64], kmax: usize) -> Vec<f64> {
    let da = a.iter().rposition(|&c| c != 0.0).unwrap_or(0);
    let db = b.iter().rposition(|&c| c != 0.0).unwrap_or(0);
    let mut out = vec![0.0; kmax + 1];
    for (i, &ai) in a.iter().enumerate().take(da.min(kmax) + 1) {
        if ai == 0.0 {
            continue;
        }
        let top = db.min(kmax - i);
        for (o, &bj) in out[i..=i + top].iter_mut().zip(&b[..=top]) {
            *o += ai * bj;
        }
    }
    out
}

/// `((p + n0 - 1) / n0)^power` as a truncated series.
fn compose_offspring(p: &[f64], n0: u32, power: u32, kmax: usize) -> Vec<f64> {
    let n0f = n0 as f64;
    let mut base: Vec<f64> = p.iter().map(|c| c / n0f).collect();
    base[0] += (n0f - 1.0) / n0f;
    let mut acc = vec![0.0; kmax + 1];
    acc[0] = 1.0;
    for _ in 0..power {
        acc = poly_mul_trunc(&acc, &base, kmax);
    }
    acc
}

fn shift_up(p: Vec<f64>) -> Vec<f64> {
    let kmax = p.len() - 1;
    let mut out = vec![0.0; kmax + 1];
    out[1..].copy_from_slice(&p[..kmax]);
    out
}

fn finish_series(coefficients: Vec<f64>) -> PgfSeries {
    let total: f64 = coefficients.iter().sum();
    PgfSeries {
        coefficients,
        truncation_mass: (1.0 - total).max(0.0),
    }
}

/// Exact pmf of `X_n`, `Y_n`, `X~_n` or `Y~_n` on `0..=kmax` by truncated
/// power-series composition. Coefficients up to `kmax` are exact; everything
/// above is reported as `truncation_mass`, and exceeding `max_residual` is an error.
pub fn exact_pmf(
    law: OffspringLaw,
    n: usize,
    kind: PmfKind,
    kmax: usize,
    max_residual: f64,
) -> Result<PgfSeries> {
    if kmax == 0 || kmax > MAX_PMF_DEGREE {
        return Err(Error::domain(format!(
            "kmax must lie in 1..={MAX_PMF_DEGREE}, got {kmax}"
        )));
    }
    let mut identity = vec![0.0; kmax + 1];
    identity[1] = 1.0;
    let n0 = law.n0;

    let series = match kind {
        PmfKind::Level => {
            let mut p = identity;
            for _ in 0..n {
                p = compose_offspring(&p, n0, n0, kmax);
            }
            p
        }
        PmfKind::Progeny => {
            let mut p = identity;
            for _ in 0..n {
                p = shift_up(compose_offspring(&p, n0, n0, kmax));
            }
            p
        }
        PmfKind::ModifiedLevel => {
            if n == 0 {
                identity
            } else {
                let mut p = identity;
                for _ in 0..n - 1 {
                    p = compose_offspring(&p, n0, n0, kmax);
                }
                compose_offspring(&p, n0, n0 - 1, kmax)
            }
        }
        PmfKind::ModifiedProgeny => {
            if n == 0 {
                identity
            } else {
                let mut p = identity;
                for _ in 0..n - 1 {
                    p = shift_up(compose_offspring(&p, n0, n0, kmax));
                }
                shift_up(compose_offspring(&p, n0, n0 - 1, kmax))
            }
        }
    };
    let out = finish_series(series);
    if out.truncation_mass > max_residual {
        return Err(Error::TruncationOverflow {
            residual: out.truncation_mass,
            limit: max_residual,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeKind {
    Plain,
    Modified,
}

/// A finite rooted tree stored as a parent array in breadth-first order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteTree {
    pub parent: Vec<Option<u32>>,
    pub level: Vec<u32>,
}

impl FiniteTree {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn generation_sizes(&self) -> Vec<usize> {
        let depth = self.level.iter().copied().max().unwrap_or(0) as usize;
        let mut sizes = vec![0; depth + 1];
        for &l in &self.level {
            sizes[l as usize] += 1;
        }
        sizes
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(v, p)| p.map(|p| (p as usize, v)))
    }
}

/// Percolation cluster of the root of the `n0`-ary tree cut at `depth_cap`:
/// each child edge is open independently with probability `1/n0`, and the
/// root of a [`TreeKind::Modified`] tree has only `n0 - 1` candidate children.
pub fn sample_tree<R: Rng + ?Sized>(
    law: OffspringLaw,
    kind: TreeKind,
    depth_cap: usize,
    rng: &mut R,
) -> FiniteTree {
    let p = law.p();
    let mut parent = vec![None];
    let mut level = vec![0u32];
    let mut frontier_start = 0;
    for depth in 0..depth_cap {
        let frontier_end = parent.len();
        if frontier_start == frontier_end {
            break;
        }
        for v in frontier_start..frontier_end {
            let candidates = if depth == 0 && kind == TreeKind::Modified {
                law.n0 - 1
            } else {
                law.n0
            };
            for _ in 0..candidates {
                if rng.random::<f64>() < p {
                    parent.push(Some(v as u32));
                    level.push(depth as u32 + 1);
                }
            }
        }
        frontier_start = frontier_end;
    }
    FiniteTree { parent, level }
}

/// Chernoff-type bound `exp(-theta lambda n + n k_n(theta))` at `theta = 1/(6n)`
/// on `P(X_n[n] >= lambda n)`, evaluated with the exact `k_n`.
pub fn tilted_level_tail_bound(law: OffspringLaw, n: usize, lambda: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("tail bound needs n >= 1"));
    }
    let nf = n as f64;
    let theta = 1.0 / (6.0 * nf);
    let k = log_level_mgf(law, n, theta)?;
    Ok((-theta * lambda * nf + nf * k).exp())
}

/// Outcome of the log-mgf bound checks on a tilt grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogMgfBoundReport {
    pub n0: u32,
    pub n: usize,
    pub alpha: f64,
    pub points: usize,
    pub progeny_failures: usize,
    pub level_failures: usize,
    /// Largest `h_n(theta) / ((1 + alpha n) theta)` seen on the grid.
    pub worst_progeny_ratio: f64,
    /// Largest `k_n(theta) / (theta + 2 n theta^2)` seen on the grid.
    pub worst_level_ratio: f64,
}

/// Check `h_n(θ) <= (1 + αn)θ` on `0 <= θ <= (α-1)/(1+αn)^2` and
/// `k_n(θ) <= θ + 2nθ²` on `0 < θ <= 1/(6n)`, each on `points` grid values.
pub fn check_log_mgf_bounds(
    law: OffspringLaw,
    n: usize,
    alpha: f64,
    points: usize,
) -> Result<LogMgfBoundReport> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::domain(format!("alpha must lie in (1,2], got {alpha}")));
    }
    let nf = n as f64;
    let theta_h = (alpha - 1.0) / (1.0 + alpha * nf).powi(2);
    let theta_k = 1.0 / (6.0 * nf.max(1.0));
    let mut report = LogMgfBoundReport {
        n0: law.n0,
        n,
        alpha,
        points,
        progeny_failures: 0,
        level_failures: 0,
        worst_progeny_ratio: 0.0,
        worst_level_ratio: 0.0,
    };
    for i in 1..=points {
        let frac = i as f64 / points as f64;
        let th = theta_h * frac;
        let h = log_progeny_mgf(law, n, th)?;
        let bound_h = (1.0 + alpha * nf) * th;
        report.worst_progeny_ratio = report.worst_progeny_ratio.max(h / bound_h);
        if h > bound_h * (1.0 + 1e-12) {
            report.progeny_failures += 1;
        }
        let tk = theta_k * frac;
        let k = log_level_mgf(law, n, tk)?;
        let bound_k = tk + 2.0 * nf * tk * tk;
        report.worst_level_ratio = report.worst_level_ratio.max(k / bound_k);
        if k > bound_k * (1.0 + 1e-12) {
            report.level_failures += 1;
        }
    }
    Ok(report)
}

/// Fitted constants for `P(Y_n > c0 n^2) >= p0 / n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgenyConstants {
    pub c0: f64,
    pub p0: f64,
    pub n_min: usize,
    pub n_max: usize,
}

/// Grid search over `c0`: for each candidate take the largest admissible
/// `p0 = min_n n P(Y_n > c0 n^2)` and keep the pair with the largest `c0 p0`.
pub fn fit_progeny_constants(
    law: OffspringLaw,
    n_range: std::ops::RangeInclusive<usize>,
    c0_grid: &[f64],
) -> Result<ProgenyConstants> {
    let (n_min, n_max) = (*n_range.start(), *n_range.end());
    if n_min == 0 || n_min > n_max {
        return Err(Error::domain("progeny fit needs 1 <= n_min <= n_max"));
    }
    let kmax = (n_max * n_max * 8).clamp(64, MAX_PMF_DEGREE);
    let pmfs: Vec<PgfSeries> = n_range
        .clone()
        .map(|n| exact_pmf(law, n, PmfKind::Progeny, kmax, 1.0))
        .collect::<Result<_>>()?;
    let mut best: Option<ProgenyConstants> = None;
    for &c0 in c0_grid {
        let p0 = n_range
            .clone()
            .zip(&pmfs)
            .map(|(n, pmf)| {
                let threshold = (c0 * (n * n) as f64).floor() as usize + 1;
                n as f64 * pmf.tail(threshold)
            })
            .fold(f64::INFINITY, f64::min);
        let cand = ProgenyConstants {
            c0,
            p0,
            n_min,
            n_max,
        };
        if best.is_none_or(|b| c0 * p0 > b.c0 * b.p0) {
            best = Some(cand);
        }
    }
    best.ok_or_else(|| Error::domain("empty c0 grid"))
}

/// Check `Y_n[n] >= c0 n^2 Bin(n, p0/n)` in the stochastic order using exact pmfs.
pub fn progeny_domination_holds(law: OffspringLaw, n: usize, c: ProgenyConstants) -> Result<bool> {
    let kmax = MAX_PMF_DEGREE;
    let single = exact_pmf(law, n, PmfKind::Progeny, kmax, 1.0)?;
    let sum = single.convolution_power(n);
    let scale = c.c0 * (n * n) as f64;
    let q = (c.p0 / n as f64).min(1.0);
    // P(c0 n^2 Bin >= c0 n^2 j) = P(Bin >= j) must not exceed P(Y_n[n] >= c0 n^2 j).
    let mut bin_tail = 1.0;
    let mut pmf_j = (1.0 - q).powi(n as i32);
    for j in 0..=n {
        if j > 0 {
            let threshold = (scale * j as f64).ceil() as usize;
            if threshold > kmax {
                // Above the truncation degree only the residual mass is known.
                if bin_tail > sum.truncation_mass + 1e-12 {
                    return Ok(false);
                }
            } else if bin_tail > sum.tail(threshold) + 1e-12 {
                return Ok(false);
            }
        }
        bin_tail -= pmf_j;
        if j < n {
            pmf_j *= (n - j) as f64 / (j + 1) as f64 * q / (1.0 - q);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn law(n0: u32) -> OffspringLaw {
        OffspringLaw::new(n0).unwrap()
    }

    #[test]
    fn pgf_examples() {
        assert_eq!(offspring_pgf(law(2), 1.0).unwrap(), 1.0);
        assert!((offspring_pgf(law(2), 0.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((offspring_pgf(law(3), 0.0).unwrap() - 8.0 / 27.0).abs() < 1e-15);
        assert!(offspring_pgf(law(2), 1.5).is_err());
        assert!(OffspringLaw::new(1).is_err());
    }

    #[test]
    fn iterate_examples() {
        assert!((pgf_iterate(law(2), 1, 0.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((pgf_iterate(law(2), 2, 0.0).unwrap() - 0.390625).abs() < 1e-15);
        assert_eq!(pgf_iterate(law(2), 0, 0.7).unwrap(), 0.7);
    }

    #[test]
    fn extinction_probability_increases_to_one() {
        for n0 in [2, 3, 5] {
            let mut prev = 0.0;
            for n in 0..200 {
                let v = pgf_iterate(law(n0), n, 0.0).unwrap();
                assert!(v >= prev);
                prev = v;
            }
            assert!(pgf_iterate(law(n0), 100_000, 0.0).unwrap() > 0.999);
        }
    }

    #[test]
    fn survival_examples() {
        assert!((survival_prob(law(2), 1).unwrap() - 0.75).abs() < 1e-15);
        let s = survival_prob(law(2), 1000).unwrap() * 1000.0;
        assert!((s / 4.0 - 1.0).abs() < 0.05, "{s}");
        let s = survival_prob(law(5), 2000).unwrap() * 2000.0;
        assert!((s / 2.5 - 1.0).abs() < 0.05, "{s}");
        assert!(survival_prob(law(2), 0).is_err());
    }

    #[test]
    fn survival_matches_iterated_pgf() {
        for n in 1..30 {
            let a = survival_prob(law(3), n).unwrap();
            let b = 1.0 - pgf_iterate(law(3), n, 0.0).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn progeny_examples() {
        assert_eq!(progeny_pgf(law(4), 0, 0.3).unwrap(), 0.3);
        assert!((progeny_pgf(law(2), 3, 1.0).unwrap() - 1.0).abs() < 1e-15);
        for n in [1usize, 4, 9] {
            let h = 1e-6;
            let d = (progeny_pgf(law(2), n, 1.0).unwrap() - progeny_pgf(law(2), n, 1.0 - h).unwrap()) / h;
            assert!((d - (n as f64 + 1.0)).abs() < 1e-3 * (n as f64 + 1.0).max(1.0), "n={n} d={d}");
        }
    }

    #[test]
    fn log_mgf_examples() {
        let t = log_mgfs(law(2), 0, 0.1).unwrap();
        assert_eq!((t.h, t.k), (0.1, 0.1));
        let alpha: f64 = 2.0;
        let n = 10.0;
        let theta = (alpha - 1.0) / (1.0 + alpha * n).powi(2);
        let t = log_mgfs(law(2), 10, theta).unwrap();
        assert!(t.h <= (1.0 + 2.0 * n) * theta);
        let theta = 1.0 / 48.0;
        let t = log_mgfs(law(3), 8, theta).unwrap();
        assert!(t.k <= theta + 16.0 * theta * theta);
    }

    #[test]
    fn log_mgf_matches_pgf_at_zero_tilt_neighbourhood() {
        // h_n(theta) = log g_n(e^theta); compare via the series at small theta.
        let l = law(3);
        let pmf = exact_pmf(l, 3, PmfKind::Progeny, 512, 1e-12).unwrap();
        let theta = 0.01_f64;
        let direct: f64 = pmf
            .coefficients
            .iter()
            .enumerate()
            .map(|(k, p)| p * (theta * k as f64).exp())
            .sum();
        let t = log_mgfs(l, 3, theta).unwrap();
        assert!((t.h - direct.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_mgf_overflow_is_signalled() {
        assert!(matches!(log_mgfs(law(2), 60, 5.0), Err(Error::Overflow { .. })));
        assert!(log_mgfs(law(2), 3, -0.1).is_err());
    }

    #[test]
    fn log_mgf_bounds_on_grid() {
        for n0 in [2, 3, 5] {
            for n in [1usize, 2, 5, 16, 33, 64] {
                for alpha in [1.25, 1.5, 2.0] {
                    let r = check_log_mgf_bounds(law(n0), n, alpha, 100).unwrap();
                    assert_eq!(r.progeny_failures, 0, "{r:?}");
                    assert_eq!(r.level_failures, 0, "{r:?}");
                }
            }
        }
    }

    #[test]
    fn pmf_examples() {
        let p = exact_pmf(law(2), 1, PmfKind::Level, 8, 1e-12).unwrap();
        assert_eq!(&p.coefficients[..3], &[0.25, 0.5, 0.25]);
        let p = exact_pmf(law(2), 1, PmfKind::ModifiedLevel, 8, 1e-12).unwrap();
        assert_eq!(&p.coefficients[..2], &[0.5, 0.5]);
        assert!(exact_pmf(law(2), 1, PmfKind::Level, 0, 1.0).is_err());
        assert!(exact_pmf(law(2), 1, PmfKind::Level, 5000, 1.0).is_err());
    }

    #[test]
    fn modified_pmf_matches_pgf() {
        for n0 in [2, 3, 5] {
            for n in 1..=5 {
                let pmf = exact_pmf(law(n0), n, PmfKind::ModifiedLevel, 4096, 1e-12).unwrap();
                for s in [0.0f64, 0.3, 0.8] {
                    let series: f64 = pmf
                        .coefficients
                        .iter()
                        .enumerate()
                        .map(|(k, c)| c * s.powi(k as i32))
                        .sum();
                    let direct = modified_pgf_iterate(law(n0), n, s).unwrap();
                    assert!((series - direct).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn truncation_is_accounted() {
        let p = exact_pmf(law(3), 6, PmfKind::Progeny, 20, 1.0).unwrap();
        let total: f64 = p.coefficients.iter().sum();
        assert!((total + p.truncation_mass - 1.0).abs() < 1e-12);
        assert!(p.truncation_mass > 0.0);
        assert!(matches!(
            exact_pmf(law(3), 6, PmfKind::Progeny, 20, 1e-6),
            Err(Error::TruncationOverflow { .. })
        ));
    }

    #[test]
    fn modified_is_dominated() {
        for n0 in [2, 3, 5] {
            for n in 0..=4 {
                let pairs = [
                    (PmfKind::ModifiedLevel, PmfKind::Level),
                    (PmfKind::ModifiedProgeny, PmfKind::Progeny),
                ];
                for (small, big) in pairs {
                    let a = exact_pmf(law(n0), n, small, 2048, 1.0).unwrap();
                    let b = exact_pmf(law(n0), n, big, 2048, 1.0).unwrap();
                    assert!(a.dominated_by(&b, 1e-14), "n0={n0} n={n} {small:?}");
                }
            }
        }
    }

    #[test]
    fn level_tail_bound_holds() {
        for n0 in [2, 3, 5] {
            for n in [8, 32] {
                for lambda in [4.0, 8.0, 16.0] {
                    let b = tilted_level_tail_bound(law(n0), n, lambda).unwrap();
                    assert!(b <= ((2.0 - lambda) / 6.0).exp() * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn sampled_first_generation_is_critical() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 200_000;
        let total: usize = (0..m)
            .map(|_| sample_tree(law(2), TreeKind::Plain, 1, &mut rng).len() - 1)
            .sum();
        let mean = total as f64 / m as f64;
        // sd of Bin(2, 1/2) is sqrt(1/2)
        assert!((mean - 1.0).abs() < 4.0 * (0.5 / m as f64).sqrt());
    }

    #[test]
    fn depth_zero_tree_is_single_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = sample_tree(law(3), TreeKind::Plain, 0, &mut rng);
        assert_eq!(t.len(), 1);
        assert_eq!(t.generation_sizes(), vec![1]);
    }

    #[test]
    fn modified_root_has_thinned_generation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = sample_tree(law(2), TreeKind::Modified, 1, &mut rng);
        assert!(t.len() <= 2);
    }

    #[test]
    fn progeny_constants_fit_and_dominate() {
        let grid: Vec<f64> = (1..=40).map(|i| i as f64 * 0.025).collect();
        let c = fit_progeny_constants(law(2), 2..=6, &grid).unwrap();
        assert!(c.c0 > 0.0 && c.p0 > 0.0, "{c:?}");
        for n in 2..=4 {
            assert!(progeny_domination_holds(law(2), n, c).unwrap(), "n={n} {c:?}");
        }
    }
}
