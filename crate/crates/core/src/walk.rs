//! Continuous-time simple random walk on a lazily explored cluster.
//!
//! The walk holds at each vertex for an Exp(1) time and then jumps to a
//! uniformly chosen open neighbour. The cluster is explored only where the
//! walk goes.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::env::{ClusterSource, LazyCluster, NodeIdx};
use crate::error::{Error, Result};

/// Incremental `d(x0, ·)` along a nearest-neighbour path.
#[derive(Clone, Debug)]
pub struct DistanceTracker {
    root_path: Vec<NodeIdx>,
    meet: u32,
    dist: u32,
}

impl DistanceTracker {
    pub fn new<S: ClusterSource + ?Sized>(cluster: &LazyCluster<'_, S>, x0: NodeIdx) -> Self {
        let mut root_path = Vec::with_capacity(cluster.level(x0) as usize + 1);
        let mut u = Some(x0);
        while let Some(v) = u {
            root_path.push(v);
            u = cluster.parent(v);
        }
        root_path.reverse();
        Self {
            meet: cluster.level(x0),
            root_path,
            dist: 0,
        }
    }

    pub fn distance(&self) -> u32 {
        self.dist
    }

    /// Update for a jump `from → to` between neighbours.
    #[inline]
    pub fn step<S: ClusterSource + ?Sized>(
        &mut self,
        cluster: &LazyCluster<'_, S>,
        from: NodeIdx,
        to: NodeIdx,
    ) {
        let lf = cluster.level(from);
        let on_root_path = self.meet == lf;
        if cluster.level(to) < lf {
            if on_root_path {
                self.meet -= 1;
                self.dist += 1;
            } else {
                self.dist -= 1;
            }
        } else if on_root_path && self.root_path.get(lf as usize + 1) == Some(&to) {
            self.meet += 1;
            self.dist -= 1;
        } else {
            self.dist += 1;
        }
    }
}

#[inline]
fn jump<S: ClusterSource + ?Sized, R: Rng + ?Sized>(
    cluster: &mut LazyCluster<'_, S>,
    v: NodeIdx,
    rng: &mut R,
) -> NodeIdx {
    let d = cluster.degree(v);
    let k = rng.random_range(0..d);
    cluster.neighbor(v, k)
}

/// One realization of the walk up to a horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: NodeIdx,
    pub horizon: f64,
    /// Jump times, strictly increasing, all `≤ horizon`.
    pub times: Vec<f64>,
    /// Start vertex followed by the vertex entered at each jump.
    pub nodes: Vec<NodeIdx>,
    /// `d(start, ·)` for each entry of `nodes`.
    pub dists: Vec<u32>,
    /// Levels `|·| = d(0, ·)` for each entry of `nodes`.
    pub levels: Vec<u32>,
    sup: Vec<u32>,
}

impl Trajectory {
    fn new(start: NodeIdx, level: u32, horizon: f64) -> Self {
        Self {
            start,
            horizon,
            times: Vec::new(),
            nodes: vec![start],
            dists: vec![0],
            levels: vec![level],
            sup: vec![0],
        }
    }

    fn push(&mut self, t: f64, v: NodeIdx, dist: u32, level: u32) {
        self.times.push(t);
        self.nodes.push(v);
        self.dists.push(dist);
        self.levels.push(level);
        let s = (*self.sup.last().expect("non-empty")).max(dist);
        self.sup.push(s);
    }

    pub fn jumps(&self) -> usize {
        self.times.len()
    }

    /// Index into `nodes` of the position at time `t` (right-continuous).
    fn index_at(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfHorizon {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.times.partition_point(|&s| s <= t))
    }

    pub fn position_at(&self, t: f64) -> Result<NodeIdx> {
        Ok(self.nodes[self.index_at(t)?])
    }

    /// `d(x0, Y_t)`.
    pub fn displacement(&self, t: f64) -> Result<u32> {
        Ok(self.dists[self.index_at(t)?])
    }

    /// `sup_{s ≤ t} d(x0, Y_s)`.
    pub fn sup_displacement(&self, t: f64) -> Result<u32> {
        Ok(self.sup[self.index_at(t)?])
    }

    /// Number of jumps in `[0, t]`.
    pub fn jumps_by(&self, t: f64) -> Result<usize> {
        self.index_at(t)
    }

    /// Summary rows `(replica, observable, value)` at the given times.
    pub fn summary_rows(&self, replica: u64, times: &[f64]) -> Result<Vec<(u64, String, f64)>> {
        let mut rows = Vec::with_capacity(3 * times.len());
        for &t in times {
            rows.push((replica, format!("displacement@{t}"), self.displacement(t)? as f64));
            rows.push((replica, format!("sup_displacement@{t}"), self.sup_displacement(t)? as f64));
            rows.push((replica, format!("jumps@{t}"), self.jumps_by(t)? as f64));
        }
        Ok(rows)
    }
}

/// Run the continuous-time walk from `x0` up to `horizon`.
pub fn run_walk<S: ClusterSource + ?Sized, R: Rng + ?Sized>(
    cluster: &mut LazyCluster<'_, S>,
    x0: NodeIdx,
    horizon: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::domain(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    let mut traj = Trajectory::new(x0, cluster.level(x0), horizon);
    let mut tracker = DistanceTracker::new(cluster, x0);
    let mut v = x0;
    let mut t = 0.0;
    loop {
        let hold: f64 = Exp1.sample(rng);
        t += hold;
        if t > horizon {
            break;
        }
        let w = jump(cluster, v, rng);
        tracker.step(cluster, v, w);
        v = w;
        traj.push(t, v, tracker.distance(), cluster.level(v));
    }
    Ok(traj)
}

/// Discrete-time walk: one jump per unit of time.
pub fn run_walk_discrete<S: ClusterSource + ?Sized, R: Rng + ?Sized>(
    cluster: &mut LazyCluster<'_, S>,
    x0: NodeIdx,
    steps: usize,
    rng: &mut R,
) -> Trajectory {
    let mut traj = Trajectory::new(x0, cluster.level(x0), steps as f64);
    let mut tracker = DistanceTracker::new(cluster, x0);
    let mut v = x0;
    for k in 1..=steps {
        let w = jump(cluster, v, rng);
        tracker.step(cluster, v, w);
        v = w;
        traj.push(k as f64, v, tracker.distance(), cluster.level(v));
    }
    traj
}

/// Displacement and running maximum at each grid time, without storing the path.
///
/// Jump counts between grid times are drawn as Poisson increments; given the
/// counts, the visited sequence is the jump chain. This has the same law as
/// sampling the holding times.
pub fn displacement_at_times<S: ClusterSource + ?Sized, R: Rng + ?Sized>(
    cluster: &mut LazyCluster<'_, S>,
    x0: NodeIdx,
    times: &[f64],
    rng: &mut R,
) -> Result<Vec<(u32, u32)>> {
    let mut tracker = DistanceTracker::new(cluster, x0);
    let mut v = x0;
    let mut sup = 0;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= prev) || !t.is_finite() {
            return Err(Error::domain("grid times must be finite and nondecreasing from 0"));
        }
        let n = if t > prev {
            Poisson::new(t - prev).map_err(|e| Error::domain(e.to_string()))?.sample(rng) as u64
        } else {
            0
        };
        for _ in 0..n {
            let w = jump(cluster, v, rng);
            tracker.step(cluster, v, w);
            v = w;
            sup = sup.max(tracker.distance());
        }
        out.push((tracker.distance(), sup));
        prev = t;
    }
    Ok(out)
}

/// Position at each grid time (same construction as [`displacement_at_times`]).
pub fn positions_at_times<S: ClusterSource + ?Sized, R: Rng + ?Sized>(
    cluster: &mut LazyCluster<'_, S>,
    x0: NodeIdx,
    times: &[f64],
    rng: &mut R,
) -> Result<Vec<NodeIdx>> {
    let mut v = x0;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= prev) || !t.is_finite() {
            return Err(Error::domain("grid times must be finite and nondecreasing from 0"));
        }
        let n = if t > prev {
            Poisson::new(t - prev).map_err(|e| Error::domain(e.to_string()))?.sample(rng) as u64
        } else {
            0
        };
        for _ in 0..n {
            v = jump(cluster, v, rng);
        }
        out.push(v);
        prev = t;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StopTarget {
    /// First entrance into a vertex set.
    Hit(HashSet<NodeIdx>),
    /// First exit from `B(x0, r)`.
    ExitBall(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    Hit,
    Exit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingRecord {
    pub kind: StopKind,
    /// The stopping time, or the horizon when censored.
    pub time: f64,
    pub terminal: NodeIdx,
    pub censored: bool,
}

/// `T_A` or `τ_B(x0, r)`, censored at `horizon`.
pub fn stopping_time<S: ClusterSource + ?Sized, R: Rng + ?Sized>(
    cluster: &mut LazyCluster<'_, S>,
    x0: NodeIdx,
    rng: &mut R,
    target: &StopTarget,
    horizon: f64,
) -> Result<StoppingRecord> {
    if !(horizon >= 0.0) {
        return Err(Error::domain("horizon must be >= 0"));
    }
    let kind = match target {
        StopTarget::Hit(_) => StopKind::Hit,
        StopTarget::ExitBall(_) => StopKind::Exit,
    };
    let stopped = |v: NodeIdx, d: u32| match target {
        StopTarget::Hit(set) => set.contains(&v),
        StopTarget::ExitBall(r) => d > *r,
    };
    let mut tracker = DistanceTracker::new(cluster, x0);
    let mut v = x0;
    let mut t = 0.0;
    loop {
        if stopped(v, tracker.distance()) {
            return Ok(StoppingRecord {
                kind,
                time: t,
                terminal: v,
                censored: false,
            });
        }
        let hold: f64 = Exp1.sample(rng);
        if t + hold > horizon {
            return Ok(StoppingRecord {
                kind,
                time: horizon,
                terminal: v,
                censored: true,
            });
        }
        t += hold;
        let w = jump(cluster, v, rng);
        tracker.step(cluster, v, w);
        v = w;
    }
}

/// `Z~(t) = n^{-1/3} d(0, Y_{nt})` on the grid, for a walk started at the root.
pub fn height_process(traj: &Trajectory, n: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if !(n >= 1.0) {
        return Err(Error::domain("height process scale must be >= 1"));
    }
    if traj.levels[0] != 0 {
        return Err(Error::domain("height process needs a walk started at the root"));
    }
    let scale = n.powf(-1.0 / 3.0);
    grid.iter()
        .map(|&t| {
            let i = traj.index_at(n * t)?;
            Ok(traj.levels[i] as f64 * scale)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{backbone_label, Environment};
    use crate::stream::walk_rng;

    #[test]
    fn zero_horizon_has_no_jumps() {
        let env = Environment::new(2, 1).unwrap();
        let mut g = LazyCluster::new(&env);
        let traj = run_walk(&mut g, 0, 0.0, &mut walk_rng(1, 0, 0)).unwrap();
        assert_eq!(traj.nodes, vec![0]);
        assert_eq!(traj.displacement(0.0).unwrap(), 0);
        assert!(traj.displacement(0.1).is_err());
    }

    #[test]
    fn tracker_matches_tree_distance() {
        for seed in 0..10 {
            let env = Environment::new(2, seed).unwrap();
            let mut g = LazyCluster::new(&env);
            let x0 = g.locate(&backbone_label(&env, 15)).unwrap();
            let traj = run_walk(&mut g, x0, 3000.0, &mut walk_rng(seed, 0, 0)).unwrap();
            for (i, &v) in traj.nodes.iter().enumerate() {
                assert_eq!(traj.dists[i], g.distance(x0, v));
                assert_eq!(traj.levels[i], g.level(v));
            }
            for w in traj.nodes.windows(2) {
                assert_eq!(g.distance(w[0], w[1]), 1);
            }
            assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn trajectory_is_determined_by_streams() {
        let env = Environment::new(3, 8).unwrap();
        let mut g1 = LazyCluster::new(&env);
        let a = run_walk(&mut g1, 0, 500.0, &mut walk_rng(5, 2, 9)).unwrap();
        let mut g2 = LazyCluster::new(&env);
        let b = run_walk(&mut g2, 0, 500.0, &mut walk_rng(5, 2, 9)).unwrap();
        let la: Vec<_> = a.nodes.iter().map(|&v| g1.label(v)).collect();
        let lb: Vec<_> = b.nodes.iter().map(|&v| g2.label(v)).collect();
        assert_eq!(la, lb);
        assert_eq!(a.times, b.times);
    }

    #[test]
    fn pathwise_orderings() {
        let env = Environment::new(2, 44).unwrap();
        let mut g = LazyCluster::new(&env);
        let traj = run_walk(&mut g, 0, 2000.0, &mut walk_rng(44, 0, 1)).unwrap();
        for k in 0..200 {
            let t = k as f64 * 10.0;
            let d = traj.displacement(t).unwrap();
            let s = traj.sup_displacement(t).unwrap();
            assert!(d <= s);
            assert!(s as usize <= traj.jumps_by(t).unwrap());
        }
        if let Some(&first) = traj.times.first() {
            assert_eq!(traj.position_at(first / 2.0).unwrap(), 0);
            assert_eq!(traj.displacement(first / 2.0).unwrap(), 0);
        }
    }

    #[test]
    fn jump_count_is_unit_rate() {
        let env = Environment::new(2, 3).unwrap();
        let mut g = LazyCluster::new(&env);
        let t = 20.0;
        let n = 20_000u64;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for j in 0..n {
            let traj = run_walk(&mut g, 0, t, &mut walk_rng(3, 0, j)).unwrap();
            let c = traj.jumps() as f64;
            sum += c;
            sq += c * c;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - t).abs() < 4.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn stopping_examples() {
        let env = Environment::new(2, 12).unwrap();
        let mut g = LazyCluster::new(&env);
        let hit = stopping_time(&mut g, 0, &mut walk_rng(1, 0, 0), &StopTarget::Hit(HashSet::from([0])), 10.0)
            .unwrap();
        assert_eq!(hit.time, 0.0);
        assert!(!hit.censored);
        let exit = stopping_time(&mut g, 0, &mut walk_rng(1, 0, 1), &StopTarget::ExitBall(3), 1e9).unwrap();
        assert!(!exit.censored);
        assert_eq!(g.distance(0, exit.terminal), 4);
        let cens = stopping_time(&mut g, 0, &mut walk_rng(1, 0, 2), &StopTarget::ExitBall(1000), 5.0).unwrap();
        assert!(cens.censored);
        assert_eq!(cens.time, 5.0);
    }

    #[test]
    fn height_process_starts_at_zero() {
        let env = Environment::new(2, 2).unwrap();
        let mut g = LazyCluster::new(&env);
        let traj = run_walk(&mut g, 0, 1000.0, &mut walk_rng(2, 0, 0)).unwrap();
        let z = height_process(&traj, 1000.0, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(z[0], 0.0);
        let path: Vec<f64> = (0..=100)
            .map(|k| height_process(&traj, 1000.0, &[k as f64 / 100.0]).unwrap()[0])
            .collect();
        assert!(path.iter().cloned().fold(0.0, f64::max) > 0.0);
        assert!(height_process(&traj, 1000.0, &[1.5]).is_err());
    }

    #[test]
    fn discrete_walk_has_unit_times() {
        let env = Environment::new(2, 2).unwrap();
        let mut g = LazyCluster::new(&env);
        let traj = run_walk_discrete(&mut g, 0, 50, &mut walk_rng(2, 0, 0));
        assert_eq!(traj.jumps(), 50);
        assert_eq!(traj.times[9], 10.0);
    }
}
