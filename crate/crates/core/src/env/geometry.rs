use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::cluster::{ClusterBall, LazyCluster, NodeIdx};
use super::{ClusterSource, VertexLabel};
use crate::error::{Error, Result};

/// Smallest goodness level for which the regularity clauses are designed.
pub const LAMBDA_MIN: f64 = 64.0;

/// Distance of the optimal cut for `M(x, r)`: `⌈r/4⌉`, at least 1.
fn cut_distance(r: f64) -> u32 {
    ((r / 4.0).ceil() as u32).max(1)
}

/// `M(x, r)` read off a ball of radius `⌊r⌋`: the number of vertices at
/// distance `⌈r/4⌉` whose branch away from the centre leaves the ball.
pub(crate) fn cut_count_in_ball(ball: &ClusterBall, r: f64) -> u64 {
    let q = cut_distance(r);
    let mut hits: Vec<usize> = ball
        .boundary()
        .iter()
        .enumerate()
        .map(|(j, _)| ball.toward_center(ball.len() + j, q))
        .collect();
    hits.sort_unstable();
    hits.dedup();
    hits.len() as u64
}

/// `M(x, r)`: size of the smallest vertex cut at mid-range separating `x`
/// from the complement of `B(x, r)`.
pub fn cut_count<S: ClusterSource + ?Sized>(
    cluster: &mut LazyCluster<'_, S>,
    x: &VertexLabel,
    r: f64,
) -> Result<u64> {
    if !(r >= 1.0) {
        return Err(Error::domain(format!("cut radius must be at least 1, got {r}")));
    }
    let v = cluster.locate(x)?;
    let ball = cluster.explore_ball(v, r.floor() as u32);
    Ok(cut_count_in_ball(&ball, r))
}

/// Outcome of the five regularity clauses for `B(x, r)` at level `λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodnessReport {
    pub lambda: f64,
    pub radius: f64,
    /// (a) `x ∈ G`.
    pub in_cluster: bool,
    /// (b) `r²/λ² ≤ V(x, r) ≤ r²λ`.
    pub volume_ok: bool,
    /// (c) `M(x, r) ≤ λ/64`.
    pub cut_ok: bool,
    /// (d) `V(x, r/λ) ≥ r²/λ⁴`.
    pub inner_volume_ok: bool,
    /// (e) `V(x, r/λ²) ≥ r²/λ⁶`.
    pub innermost_volume_ok: bool,
    pub volume: u64,
    pub inner_volume: u64,
    pub innermost_volume: u64,
    pub cut_count: u64,
    /// `λ` is below the level the clauses were designed for.
    pub below_lambda_min: bool,
}

impl GoodnessReport {
    pub fn good(&self) -> bool {
        self.in_cluster
            && self.volume_ok
            && self.cut_ok
            && self.inner_volume_ok
            && self.innermost_volume_ok
    }
}

/// Goodness of `B(x, r)` for an explored vertex `x`.
pub fn lambda_good_at<S: ClusterSource + ?Sized>(
    cluster: &mut LazyCluster<'_, S>,
    x: NodeIdx,
    r: f64,
    lambda: f64,
) -> Result<GoodnessReport> {
    if !(lambda >= 1.0) || !(r >= 0.0) || !r.is_finite() {
        return Err(Error::domain(format!(
            "goodness needs lambda >= 1 and finite r >= 0, got lambda={lambda}, r={r}"
        )));
    }
    let ri = r.floor() as u32;
    let ball = cluster.explore_ball(x, ri);
    let r2 = r * r;
    let volume = ball.volume_within(ri);
    let inner_volume = ball.volume_within((r / lambda).floor() as u32);
    let innermost_volume = ball.volume_within((r / (lambda * lambda)).floor() as u32);
    let cut = if r >= 1.0 { cut_count_in_ball(&ball, r) } else { 1 };
    let v = volume as f64;
    Ok(GoodnessReport {
        lambda,
        radius: r,
        in_cluster: true,
        volume_ok: r2 / (lambda * lambda) <= v && v <= r2 * lambda,
        cut_ok: cut as f64 <= lambda / 64.0,
        inner_volume_ok: inner_volume as f64 >= r2 / lambda.powi(4),
        innermost_volume_ok: innermost_volume as f64 >= r2 / lambda.powi(6),
        volume,
        inner_volume,
        innermost_volume,
        cut_count: cut,
        below_lambda_min: lambda < LAMBDA_MIN,
    })
}

/// Goodness of `B(x, r)`; signals not-in-cluster when `x ∉ G`.
pub fn is_lambda_good<S: ClusterSource + ?Sized>(
    cluster: &mut LazyCluster<'_, S>,
    x: &VertexLabel,
    r: f64,
    lambda: f64,
) -> Result<GoodnessReport> {
    let v = cluster.locate(x)?;
    lambda_good_at(cluster, v, r, lambda)
}

/// Parameters for the `G3` condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct G3Config {
    /// The heat-kernel lower-bound constant that sets the smallest admissible `Θ`.
    pub c472: f64,
    /// Balls are `B(z_i, λ^e r)`; the definition uses `e = 20`.
    pub radius_exponent: u32,
    /// Largest `λ` tried before giving up.
    pub theta_cap: u32,
    /// Largest ball radius that may be explored.
    pub exploration_limit: u64,
}

impl Default for G3Config {
    fn default() -> Self {
        Self {
            c472: 1.0,
            radius_exponent: 20,
            theta_cap: 256,
            exploration_limit: 1 << 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G3Report {
    pub holds: bool,
    pub thetas: Vec<u32>,
    /// `Σ Θ_i^54`.
    pub theta_sum: f64,
    pub m: u32,
    pub kappa: f64,
}

/// Memoizing evaluator for the path conditions built from good balls.
///
/// Arena indices are specific to one cluster, so a checker must only be
/// used with the cluster it was created for.
pub struct GoodnessChecker<'c, 'a, S: ClusterSource + ?Sized> {
    cluster: &'c mut LazyCluster<'a, S>,
    lambda1: f64,
    memo: HashMap<(NodeIdx, u64, u64), bool>,
}

impl<'c, 'a, S: ClusterSource + ?Sized> GoodnessChecker<'c, 'a, S> {
    /// `lambda1` is the fixed goodness level of the balls counted by `F1`.
    pub fn new(cluster: &'c mut LazyCluster<'a, S>, lambda1: f64) -> Self {
        Self {
            cluster,
            lambda1,
            memo: HashMap::new(),
        }
    }

    pub fn cluster(&mut self) -> &mut LazyCluster<'a, S> {
        self.cluster
    }

    pub fn good(&mut self, z: NodeIdx, r: f64, lambda: f64) -> Result<bool> {
        let key = (z, r.to_bits(), lambda.to_bits());
        if let Some(&g) = self.memo.get(&key) {
            return Ok(g);
        }
        let g = lambda_good_at(self.cluster, z, r, lambda)?.good();
        self.memo.insert(key, g);
        Ok(g)
    }

    /// `F1` on explored vertices: at least `k` disjoint `λ1`-good balls
    /// `B(z, r/2)` centred on `γ(x, y)`, chosen greedily from `x`.
    pub fn f1_nodes(&mut self, x: NodeIdx, y: NodeIdx, r: f64, k: f64) -> Result<bool> {
        if k <= 0.0 {
            return Ok(true);
        }
        let half = r / 2.0;
        // Balls of radius ρ on a tree are disjoint iff their centres are more than 2ρ apart.
        let gap = 2 * half.floor() as usize;
        let path = self.cluster.geodesic(x, y);
        let mut count = 0usize;
        let mut last: Option<usize> = None;
        for (i, &z) in path.iter().enumerate() {
            if last.is_some_and(|l| i - l <= gap) {
                continue;
            }
            if self.good(z, half, self.lambda1)? {
                count += 1;
                last = Some(i);
                if count as f64 >= k {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    pub fn f1(&mut self, x: &VertexLabel, y: &VertexLabel, r: f64, k: f64) -> Result<bool> {
        let xv = self.cluster.locate(x)?;
        let yv = self.cluster.locate(y)?;
        self.f1_nodes(xv, yv, r, k)
    }

    /// `G2(N, R)`: `F1(x, z, R, N/8)` for every `z ∈ ∂B(x, NR)`.
    pub fn g2(&mut self, x: &VertexLabel, n: u32, r: u32) -> Result<bool> {
        let xv = self.cluster.locate(x)?;
        let ball = self.cluster.explore_ball(xv, n * r);
        for z in ball.boundary() {
            if !self.f1_nodes(xv, z.node, r as f64, n as f64 / 8.0)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `F*(x, y, R, k; r, N)` with the lower midpoint of `γ(x, y)`.
    pub fn fstar(
        &mut self,
        x: &VertexLabel,
        y: &VertexLabel,
        big_r: f64,
        k: f64,
        r: f64,
        n: f64,
    ) -> Result<bool> {
        let xv = self.cluster.locate(x)?;
        let yv = self.cluster.locate(y)?;
        let path = self.cluster.geodesic(xv, yv);
        let z0 = path[(path.len() - 1) / 2];
        Ok(self.f1_nodes(xv, z0, big_r, k / 2.0)?
            && self.f1_nodes(z0, yv, big_r, k / 2.0)?
            && self.good(xv, r, n)?
            && self.good(z0, r, n)?
            && self.good(yv, r, n)?)
    }

    /// `G3(x, y, m, κ)` with points spaced by nondecreasing gaps.
    pub fn g3(
        &mut self,
        x: &VertexLabel,
        y: &VertexLabel,
        m: u32,
        kappa: f64,
        cfg: &G3Config,
    ) -> Result<G3Report> {
        if m == 0 || !(cfg.c472 > 0.0) {
            return Err(Error::domain("G3 needs m >= 1 and c472 > 0"));
        }
        let xv = self.cluster.locate(x)?;
        let yv = self.cluster.locate(y)?;
        let path = self.cluster.geodesic(xv, yv);
        let d = path.len() - 1;
        let r = d as f64 / m as f64;
        let (q, rem) = (d / m as usize, d % m as usize);
        let lam_min = (3.0 / cfg.c472).ceil().max(64.0) as u32;
        let mut thetas = Vec::with_capacity(m as usize);
        let mut pos = 0usize;
        for i in 1..=m as usize {
            pos += q + usize::from(i > m as usize - rem);
            let z = path[pos];
            let small = self.cluster.explore_ball(z, r.floor() as u32).len() as f64;
            let mut theta = None;
            for lam in lam_min..=cfg.theta_cap {
                let l = lam as f64;
                let radius = l.powi(cfg.radius_exponent as i32) * r;
                if radius > cfg.exploration_limit as f64 {
                    return Err(Error::ExplorationLimit {
                        radius: radius.min(u64::MAX as f64) as u64,
                        limit: cfg.exploration_limit,
                    });
                }
                if small >= r * r / (l * l) && self.good(z, radius, l)? {
                    theta = Some(lam);
                    break;
                }
            }
            match theta {
                Some(t) => thetas.push(t),
                None => {
                    return Err(Error::UnboundedTheta {
                        index: i,
                        cap: cfg.theta_cap,
                    })
                }
            }
        }
        let theta_sum: f64 = thetas.iter().map(|&t| (t as f64).powi(54)).sum();
        Ok(G3Report {
            holds: theta_sum <= kappa * m as f64,
            thetas,
            theta_sum,
            m,
            kappa,
        })
    }
}

pub fn check_f1<S: ClusterSource + ?Sized>(
    cluster: &mut LazyCluster<'_, S>,
    lambda1: f64,
    x: &VertexLabel,
    y: &VertexLabel,
    r: f64,
    k: f64,
) -> Result<bool> {
    GoodnessChecker::new(cluster, lambda1).f1(x, y, r, k)
}

pub fn check_g2<S: ClusterSource + ?Sized>(
    cluster: &mut LazyCluster<'_, S>,
    lambda1: f64,
    x: &VertexLabel,
    n: u32,
    r: u32,
) -> Result<bool> {
    GoodnessChecker::new(cluster, lambda1).g2(x, n, r)
}

#[allow(clippy::too_many_arguments)]
pub fn check_fstar<S: ClusterSource + ?Sized>(
    cluster: &mut LazyCluster<'_, S>,
    lambda1: f64,
    x: &VertexLabel,
    y: &VertexLabel,
    big_r: f64,
    k: f64,
    r: f64,
    n: f64,
) -> Result<bool> {
    GoodnessChecker::new(cluster, lambda1).fstar(x, y, big_r, k, r, n)
}

pub fn check_g3<S: ClusterSource + ?Sized>(
    cluster: &mut LazyCluster<'_, S>,
    x: &VertexLabel,
    y: &VertexLabel,
    m: u32,
    kappa: f64,
    cfg: &G3Config,
) -> Result<G3Report> {
    GoodnessChecker::new(cluster, LAMBDA_MIN).g3(x, y, m, kappa, cfg)
}
