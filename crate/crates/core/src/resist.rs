//! Potential theory on finite weighted trees.
//!
//! A [`WeightedTree`] carries explicit vertex measures so that a ball cut
//! out of a larger cluster keeps the true degrees of its boundary vertices.
//! Killed quantities take a mask of live vertices; every other vertex is
//! absorbing.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::env::{ClusterBall, ClusterSource, LazyCluster};
use crate::error::{Error, Result};
use crate::gw::FiniteTree;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedTree {
    adj: Vec<Vec<(usize, f64)>>,
    measure: Vec<f64>,
}

impl WeightedTree {
    /// Tree from weighted edges with `μ_x = Σ_y μ_xy`.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(x, y, w) in edges {
            if x >= n || y >= n || x == y {
                return Err(Error::domain(format!("bad edge ({x}, {y}) for {n} vertices")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::domain(format!("conductance must be positive, got {w}")));
            }
            adj[x].push((y, w));
            adj[y].push((x, w));
        }
        let measure = adj.iter().map(|a| a.iter().map(|e| e.1).sum()).collect();
        let tree = Self { adj, measure };
        tree.check_tree()?;
        Ok(tree)
    }

    /// Unit conductances on the given edges.
    pub fn natural(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let weighted: Vec<_> = edges.iter().map(|&(x, y)| (x, y, 1.0)).collect();
        Self::from_edges(n, &weighted)
    }

    /// Replace vertex measures; each must be at least the sum of its conductances.
    pub fn with_measure(mut self, measure: Vec<f64>) -> Result<Self> {
        if measure.len() != self.len() {
            return Err(Error::domain("measure length differs from vertex count"));
        }
        for (x, &m) in measure.iter().enumerate() {
            let s: f64 = self.adj[x].iter().map(|e| e.1).sum();
            if !(m > 0.0) || m < s * (1.0 - 1e-12) {
                return Err(Error::domain(format!(
                    "measure {m} at vertex {x} is below its conductance sum {s}"
                )));
            }
        }
        self.measure = measure;
        Ok(self)
    }

    pub fn from_finite_tree(tree: &FiniteTree) -> Result<Self> {
        let edges: Vec<_> = tree.edges().collect();
        Self::natural(tree.len(), &edges)
    }

    /// A cluster ball with natural weights. Vertex `i` is `ball.all()[i]`;
    /// the first `ball.len()` vertices are the interior and the rest form
    /// the outer boundary. Measures are true cluster degrees.
    pub fn from_ball(ball: &ClusterBall) -> Result<Self> {
        let all = ball.all();
        let edges: Vec<_> = all
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.parent.map(|p| (p, i)))
            .collect();
        let measure = all.iter().map(|v| v.degree as f64).collect();
        Self::natural(all.len(), &edges)?.with_measure(measure)
    }

    fn check_tree(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::domain("empty tree"));
        }
        let edges: usize = self.adj.iter().map(Vec::len).sum::<usize>() / 2;
        if edges + 1 != n || self.hop_distances(0).iter().any(|&d| d == u32::MAX) {
            return Err(Error::domain("edges do not form a spanning tree"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn measure(&self, x: usize) -> f64 {
        self.measure[x]
    }

    pub fn measures(&self) -> &[f64] {
        &self.measure
    }

    pub fn neighbors(&self, x: usize) -> &[(usize, f64)] {
        &self.adj[x]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(x, a)| a.iter().filter(move |e| e.0 > x).map(move |&(y, w)| (x, y, w)))
    }

    /// Graph distances from `x` (`u32::MAX` if unreachable).
    pub fn hop_distances(&self, x: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.len()];
        let mut queue = VecDeque::from([x]);
        dist[x] = 0;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adj[u] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// `V(x, r) = μ(B(x, r))` in the hop metric.
    pub fn ball_volume(&self, x: usize, r: f64) -> f64 {
        self.hop_distances(x)
            .iter()
            .zip(&self.measure)
            .filter(|(&d, _)| d as f64 <= r)
            .map(|(_, &m)| m)
            .sum()
    }
}

/// Explore `B(x, r)` and return it with its weighted tree.
pub fn ball_tree<S: ClusterSource + ?Sized>(
    cluster: &mut LazyCluster<'_, S>,
    x: u32,
    r: u32,
) -> Result<(ClusterBall, WeightedTree)> {
    let ball = cluster.explore_ball(x, r);
    let tree = WeightedTree::from_ball(&ball)?;
    Ok((ball, tree))
}

/// `E(f, g) = ½ Σ_{x~y} (f(x) − f(y))(g(x) − g(y)) μ_xy`.
pub fn dirichlet_form(tree: &WeightedTree, f: &[f64], g: &[f64]) -> f64 {
    tree.edges()
        .map(|(x, y, w)| (f[x] - f[y]) * (g[x] - g[y]) * w)
        .sum()
}

pub fn dirichlet_energy(tree: &WeightedTree, f: &[f64]) -> f64 {
    dirichlet_form(tree, f, f)
}

/// Breadth-first order and parent links of the tree rooted at `root`.
fn rooted(tree: &WeightedTree, root: usize) -> (Vec<usize>, Vec<Option<(usize, f64)>>) {
    let mut order = Vec::with_capacity(tree.len());
    let mut parent = vec![None; tree.len()];
    let mut seen = vec![false; tree.len()];
    seen[root] = true;
    order.push(root);
    let mut i = 0;
    while i < order.len() {
        let u = order[i];
        for &(v, w) in tree.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some((u, w));
                order.push(v);
            }
        }
        i += 1;
    }
    (order, parent)
}

/// `R(x, A)` by series/parallel reduction of the tree rooted at `x`.
///
/// A branch with a single route to the target is reduced by pure series
/// addition, so on a natural-weight path the result is an exact integer.
pub fn effective_resistance(tree: &WeightedTree, x: usize, target: &[usize]) -> Result<f64> {
    if target.is_empty() {
        return Err(Error::domain("target set is empty"));
    }
    let mut is_target = vec![false; tree.len()];
    for &a in target {
        is_target[a] = true;
    }
    if is_target[x] {
        return Ok(0.0);
    }
    let (order, parent) = rooted(tree, x);
    // Resistance from v down to the target inside v's subtree.
    let mut res: Vec<Option<f64>> = vec![None; tree.len()];
    let mut acc: Vec<(usize, f64, f64)> = vec![(0, 0.0, 0.0); tree.len()]; // (count, conductance sum, single series value)
    for &v in order.iter().rev() {
        let r_v = if is_target[v] {
            Some(0.0)
        } else {
            match acc[v] {
                (0, _, _) => None,
                (1, _, single) => Some(single),
                (_, c, _) => Some(1.0 / c),
            }
        };
        res[v] = r_v;
        if let (Some(r), Some((p, w))) = (r_v, parent[v]) {
            let through = 1.0 / w + r;
            let a = &mut acc[p];
            a.0 += 1;
            a.1 += 1.0 / through;
            a.2 = through;
        }
    }
    res[x].ok_or(Error::UnreachableTarget)
}

/// Factorization of the killed Laplacian `D_μ − W` on the live vertices,
/// eliminated leaf to root (no fill-in on a tree).
pub struct GreenSolver {
    alive: Vec<bool>,
    order: Vec<usize>,
    parent: Vec<Option<(usize, f64)>>,
    pivot: Vec<f64>,
}

impl GreenSolver {
    pub fn new(tree: &WeightedTree, alive: &[bool]) -> Result<Self> {
        let n = tree.len();
        if alive.len() != n {
            return Err(Error::domain("live mask length differs from vertex count"));
        }
        let mut order = Vec::new();
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        let mut pivot = vec![0.0; n];
        for s in 0..n {
            if !alive[s] || seen[s] {
                continue;
            }
            // One component of the live subgraph.
            let start = order.len();
            seen[s] = true;
            order.push(s);
            let mut i = start;
            let mut killing = false;
            while i < order.len() {
                let u = order[i];
                let inside: f64 = tree
                    .neighbors(u)
                    .iter()
                    .filter(|e| alive[e.0])
                    .map(|e| e.1)
                    .sum();
                if tree.measure(u) > inside * (1.0 + 1e-12) {
                    killing = true;
                }
                for &(v, w) in tree.neighbors(u) {
                    if alive[v] && !seen[v] {
                        seen[v] = true;
                        parent[v] = Some((u, w));
                        order.push(v);
                    }
                }
                i += 1;
            }
            if !killing {
                return Err(Error::SingularSystem);
            }
            for &u in &order[start..] {
                pivot[u] = tree.measure(u);
            }
            for &u in order[start..].iter().rev() {
                if let Some((p, w)) = parent[u] {
                    pivot[p] -= w * w / pivot[u];
                }
            }
        }
        if order.is_empty() {
            return Err(Error::domain("no live vertices"));
        }
        Ok(Self {
            alive: alive.to_vec(),
            order,
            parent,
            pivot,
        })
    }

    /// Solve `(D_μ − W) u = b` on the live set; `u = 0` elsewhere.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = b
            .iter()
            .zip(&self.alive)
            .map(|(&v, &a)| if a { v } else { 0.0 })
            .collect();
        for &u in self.order.iter().rev() {
            if let Some((p, w)) = self.parent[u] {
                y[p] += w * y[u] / self.pivot[u];
            }
        }
        let mut u = vec![0.0; y.len()];
        for &v in &self.order {
            let up = self.parent[v].map_or(0.0, |(p, w)| w * u[p]);
            u[v] = (y[v] + up) / self.pivot[v];
        }
        u
    }

    /// `g_B(·, y)`.
    pub fn green_column(&self, y: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.alive.len()];
        e[y] = 1.0;
        self.solve(&e)
    }

    /// `g_B(x, y)`.
    pub fn green(&self, x: usize, y: usize) -> f64 {
        self.green_column(y)[x]
    }

    pub fn is_alive(&self, x: usize) -> bool {
        self.alive[x]
    }
}

/// Live mask for a ball tree: the first `interior` vertices.
pub fn interior_mask(n: usize, interior: usize) -> Vec<bool> {
    (0..n).map(|i| i < interior).collect()
}

/// `g_B(x, y)` by a direct solve.
pub fn green_kernel(tree: &WeightedTree, alive: &[bool], x: usize, y: usize) -> Result<f64> {
    if !alive[x] || !alive[y] {
        return Err(Error::domain("green kernel arguments must be live vertices"));
    }
    Ok(GreenSolver::new(tree, alive)?.green(x, y))
}

/// `E^z τ_B = Σ_y g_B(z, y) μ_y` for every vertex (zero off the live set).
pub fn mean_exit_times(tree: &WeightedTree, alive: &[bool]) -> Result<Vec<f64>> {
    Ok(GreenSolver::new(tree, alive)?.solve(tree.measures()))
}

pub fn mean_exit_time(tree: &WeightedTree, alive: &[bool], z: usize) -> Result<f64> {
    if !alive[z] {
        return Err(Error::domain("exit time starts from a live vertex"));
    }
    Ok(mean_exit_times(tree, alive)?[z])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    KilledOutside,
    WholeGraph,
}

/// Symmetric table of `q_t(x, y)` at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    pub t: f64,
    pub boundary: BoundaryCondition,
    n: usize,
    values: Vec<f64>,
}

impl KernelMatrix {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[x * self.n + y]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Uniformization step cap for time `t`.
pub fn step_cap(t: f64) -> usize {
    (10.0 * t + 50.0 * t.sqrt() + 100.0).ceil() as usize
}

/// Poisson(t) weights `w_k` streamed in `k`, with tail control.
struct PoissonWeights {
    t: f64,
    log_t: f64,
    log_p: f64,
    k: usize,
}

impl PoissonWeights {
    fn new(t: f64) -> Self {
        Self {
            t,
            log_t: t.ln(),
            log_p: -t,
            k: 0,
        }
    }

    /// Weight of the current `k`, then advance.
    fn next(&mut self) -> f64 {
        let w = if self.t == 0.0 {
            if self.k == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            self.log_p.exp()
        };
        self.k += 1;
        if self.t > 0.0 {
            self.log_p += self.log_t - (self.k as f64).ln();
        }
        w
    }

    /// Upper bound on the mass of all weights not yet returned.
    fn tail_bound(&self) -> f64 {
        if self.t == 0.0 {
            return if self.k == 0 { 1.0 } else { 0.0 };
        }
        let ratio = self.t / (self.k as f64 + 1.0);
        if ratio >= 1.0 {
            return 1.0;
        }
        self.log_p.exp() / (1.0 - ratio)
    }
}

/// Mass transported by one jump-chain step on the live set:
/// `out(y) = Σ_{z ~ y, z live} v(z) μ_zy / μ_z` for live `y`.
fn jump_step(tree: &WeightedTree, alive: &[bool], reach: &[usize], v: &[f64], out: &mut [f64]) {
    for &y in reach {
        out[y] = 0.0;
    }
    for &z in reach {
        let vz = v[z];
        if vz == 0.0 {
            continue;
        }
        let scale = vz / tree.measure(z);
        for &(y, w) in tree.neighbors(z) {
            if alive[y] {
                out[y] += scale * w;
            }
        }
    }
}

/// Heat kernel rows `q_t(x, ·)` at several times, plus the surviving mass
/// `Σ_y q_t(x, y) μ_y` (equal to `P^x(τ > t)` when killed).
#[derive(Clone, Debug, PartialEq)]
pub struct KernelRows {
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub survival: Vec<f64>,
    pub steps: usize,
}

/// `q_t(x, ·)` for every `t` in `times` by uniformization of the unit-rate
/// walk: `q_t(x, y) μ_y = Σ_k Pois(t; k) (P^k)_{xy}`, truncated once the
/// Poisson tail drops below `tol` for every requested time.
pub fn heat_kernel_rows(
    tree: &WeightedTree,
    alive: &[bool],
    x: usize,
    times: &[f64],
    tol: f64,
) -> Result<KernelRows> {
    let t_max = times.iter().copied().fold(0.0, f64::max);
    heat_kernel_rows_capped(tree, alive, x, times, tol, step_cap(t_max))
}

/// As [`heat_kernel_rows`] with an explicit cap on uniformization steps.
pub fn heat_kernel_rows_capped(
    tree: &WeightedTree,
    alive: &[bool],
    x: usize,
    times: &[f64],
    tol: f64,
    cap: usize,
) -> Result<KernelRows> {
    let n = tree.len();
    if alive.len() != n || !alive[x] {
        return Err(Error::domain("kernel source must be a live vertex"));
    }
    if !(tol > 0.0) || times.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(Error::domain("heat kernel needs tol > 0 and finite t >= 0"));
    }
    let mut weights: Vec<PoissonWeights> = times.iter().map(|&t| PoissonWeights::new(t)).collect();
    let mut acc = vec![vec![0.0; n]; times.len()];
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    v[x] = 1.0;
    // Vertices the walk can have reached so far, in discovery order.
    let dist = tree.hop_distances(x);
    let mut by_dist: Vec<usize> = (0..n).filter(|&y| alive[y] && dist[y] != u32::MAX).collect();
    by_dist.sort_by_key(|&y| dist[y]);
    let mut reach_len = 1;
    let mut k = 0usize;
    loop {
        for (w, a) in weights.iter_mut().zip(acc.iter_mut()) {
            let wk = w.next();
            if wk > 0.0 {
                for &y in &by_dist[..reach_len] {
                    a[y] += wk * v[y];
                }
            }
        }
        if weights.iter().all(|w| w.tail_bound() < tol) {
            break;
        }
        k += 1;
        if k > cap {
            return Err(Error::ToleranceUnachievable { needed: k, cap });
        }
        while reach_len < by_dist.len() && dist[by_dist[reach_len]] as usize <= k {
            reach_len += 1;
        }
        jump_step(tree, alive, &by_dist[..reach_len], &v, &mut next);
        std::mem::swap(&mut v, &mut next);
    }
    let survival = acc.iter().map(|a| a.iter().sum()).collect();
    let rows = acc
        .into_iter()
        .map(|a| a.iter().zip(tree.measures()).map(|(p, m)| p / m).collect())
        .collect();
    Ok(KernelRows {
        times: times.to_vec(),
        rows,
        survival,
        steps: k,
    })
}

/// `q_t(x, y)`.
pub fn heat_kernel(
    tree: &WeightedTree,
    alive: &[bool],
    x: usize,
    y: usize,
    t: f64,
    tol: f64,
) -> Result<f64> {
    Ok(heat_kernel_rows(tree, alive, x, &[t], tol)?.rows[0][y])
}

/// All of `q_t(·, ·)`; intended for small trees.
pub fn kernel_matrix(
    tree: &WeightedTree,
    alive: &[bool],
    t: f64,
    tol: f64,
) -> Result<KernelMatrix> {
    let n = tree.len();
    let mut values = vec![0.0; n * n];
    for x in (0..n).filter(|&x| alive[x]) {
        let row = &heat_kernel_rows(tree, alive, x, &[t], tol)?.rows[0];
        values[x * n..(x + 1) * n].copy_from_slice(row);
    }
    Ok(KernelMatrix {
        t,
        boundary: if alive.iter().all(|&a| a) {
            BoundaryCondition::WholeGraph
        } else {
            BoundaryCondition::KilledOutside
        },
        n,
        values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnDiagonalCheck {
    pub r: f64,
    pub volume: f64,
    /// Time at which the kernel was evaluated (`2t` in the bound's notation).
    pub time: f64,
    pub kernel: f64,
    pub bound: f64,
    pub holds: bool,
}

/// On-diagonal upper bound `q_{2rV(x,r)}(x, x) ≤ 2/V(x, r)` on the whole
/// tree, which needs every conductance to be at least 1.
pub fn verify_on_diagonal_bound(tree: &WeightedTree, x: usize, r: f64, tol: f64) -> Result<OnDiagonalCheck> {
    if tree.edges().any(|(_, _, w)| w < 1.0) {
        return Err(Error::domain("the on-diagonal bound needs conductances >= 1"));
    }
    if !(r > 0.0) {
        return Err(Error::domain("radius must be positive"));
    }
    let volume = tree.ball_volume(x, r);
    let time = 2.0 * r * volume;
    let alive = vec![true; tree.len()];
    let kernel = heat_kernel(tree, &alive, x, x, time, tol)?;
    let bound = 2.0 / volume;
    Ok(OnDiagonalCheck {
        r,
        volume,
        time,
        kernel,
        bound,
        holds: kernel <= bound + tol,
    })
}

/// Power-law variant: with `A = r²/V(x, r)` and `t = r³`,
/// `q_{2t}(x, x) ≤ 2 (A ∨ 1) t^{-2/3}`.
pub fn verify_power_bound(tree: &WeightedTree, x: usize, r: f64, tol: f64) -> Result<OnDiagonalCheck> {
    if !(r > 0.0) {
        return Err(Error::domain("radius must be positive"));
    }
    let volume = tree.ball_volume(x, r);
    let a = (r * r / volume).max(1.0);
    let t = r * r * r;
    let alive = vec![true; tree.len()];
    let kernel = heat_kernel(tree, &alive, x, x, 2.0 * t, tol)?;
    let bound = 2.0 * a * t.powf(-2.0 / 3.0);
    Ok(OnDiagonalCheck {
        r,
        volume,
        time: 2.0 * t,
        kernel,
        bound,
        holds: kernel <= bound + tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(n: usize) -> WeightedTree {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        WeightedTree::natural(n, &edges).unwrap()
    }

    fn random_tree(parents: &[usize], weights: &[f64]) -> WeightedTree {
        let edges: Vec<_> = parents
            .iter()
            .enumerate()
            .map(|(i, &p)| (p % (i + 1), i + 1, weights[i]))
            .collect();
        WeightedTree::from_edges(parents.len() + 1, &edges).unwrap()
    }

    #[test]
    fn energy_examples() {
        let t = path(2);
        assert_eq!(dirichlet_energy(&t, &[3.0, 3.0]), 0.0);
        assert_eq!(dirichlet_energy(&t, &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn rejects_non_trees() {
        assert!(WeightedTree::natural(3, &[(0, 1)]).is_err());
        assert!(WeightedTree::natural(3, &[(0, 1), (1, 2), (2, 0)]).is_err());
        assert!(WeightedTree::from_edges(2, &[(0, 1, 0.0)]).is_err());
    }

    #[test]
    fn resistance_examples() {
        let t = path(9);
        assert_eq!(effective_resistance(&t, 0, &[8]).unwrap(), 8.0);
        assert_eq!(effective_resistance(&t, 3, &[3]).unwrap(), 0.0);
        // star: centre 0 with k leaves
        let star = WeightedTree::natural(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let r = effective_resistance(&star, 0, &[1, 2, 3, 4]).unwrap();
        assert!((r - 0.25).abs() < 1e-15);
        assert!(matches!(
            effective_resistance(&star, 0, &[]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn resistance_matches_dense_solve() {
        // Oracle: voltage solve of the full Laplacian with x at 1 and target at 0.
        let t = random_tree(&[0, 0, 1, 1, 2, 4, 4, 3], &[1.0, 2.0, 0.5, 1.5, 3.0, 1.0, 0.25, 2.0]);
        let n = t.len();
        let target = [5usize, 7, 8];
        let x = 1;
        let mut fixed = vec![None; n];
        fixed[x] = Some(1.0);
        for &a in &target {
            fixed[a] = Some(0.0);
        }
        let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
        let m = free.len();
        let mut a = vec![vec![0.0; m + 1]; m];
        for (row, &i) in free.iter().enumerate() {
            for &(j, w) in t.neighbors(i) {
                a[row][row] += w;
                match fixed[j] {
                    Some(val) => a[row][m] += w * val,
                    None => {
                        let col = free.iter().position(|&f| f == j).unwrap();
                        a[row][col] -= w;
                    }
                }
            }
        }
        // Gaussian elimination
        for c in 0..m {
            let p = (c..m).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            for r in 0..m {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=m {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        let mut volt = vec![0.0; n];
        for &i in &target {
            volt[i] = 0.0;
        }
        volt[x] = 1.0;
        for (row, &i) in free.iter().enumerate() {
            volt[i] = a[row][m] / a[row][row];
        }
        let current: f64 = t.neighbors(x).iter().map(|&(j, w)| w * (1.0 - volt[j])).sum();
        let r = effective_resistance(&t, x, &target).unwrap();
        assert!((r - 1.0 / current).abs() < 1e-12, "{r} vs {}", 1.0 / current);
    }

    #[test]
    fn resistance_to_both_ends() {
        let t = path(3);
        assert_eq!(effective_resistance(&t, 1, &[0, 2]).unwrap(), 0.5);
    }

    #[test]
    fn green_examples() {
        let t = path(3);
        let alive = [false, true, false];
        assert!((green_kernel(&t, &alive, 1, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((mean_exit_time(&t, &alive, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            GreenSolver::new(&t, &[true, true, true]),
            Err(Error::SingularSystem)
        ));
    }

    #[test]
    fn two_state_kernel() {
        let t = path(2);
        let alive = [true, true];
        for &time in &[0.0, 0.1, 1.0, 4.0, 30.0] {
            let q = heat_kernel(&t, &alive, 0, 0, time, 1e-13).unwrap();
            let exact = (1.0 + (-2.0 * time).exp()) / 2.0;
            assert!((q - exact).abs() < 1e-12, "t={time}: {q} vs {exact}");
        }
        let q0 = heat_kernel_rows(&t, &alive, 0, &[0.0], 1e-12).unwrap();
        assert_eq!(q0.rows[0], vec![1.0, 0.0]);
    }

    #[test]
    fn on_diagonal_two_state_example() {
        let t = path(2);
        let c = verify_on_diagonal_bound(&t, 0, 1.0, 1e-10).unwrap();
        assert_eq!(c.volume, 2.0);
        assert_eq!(c.time, 4.0);
        assert!((c.kernel - 0.50017).abs() < 1e-5);
        assert!(c.holds);
    }

    #[test]
    fn tolerance_cap_is_signalled() {
        let t = path(2);
        let err = heat_kernel_rows_capped(&t, &[true, true], 0, &[50.0], 1e-12, 60).unwrap_err();
        assert!(matches!(err, Error::ToleranceUnachievable { cap: 60, .. }));
        assert!(heat_kernel_rows_capped(&t, &[true, true], 0, &[50.0], 1e-12, step_cap(50.0)).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn resistance_equals_distance(parents in prop::collection::vec(0usize..1000, 1..40)) {
            let weights = vec![1.0; parents.len()];
            let t = random_tree(&parents, &weights);
            let n = t.len();
            for x in [0, n / 2, n - 1] {
                let d = t.hop_distances(x);
                for y in 0..n {
                    prop_assert_eq!(effective_resistance(&t, x, &[y]).unwrap(), d[y] as f64);
                }
            }
        }

        #[test]
        fn energy_of_min_is_subadditive(
            parents in prop::collection::vec(0usize..1000, 1..30),
            seed in prop::collection::vec(-5.0f64..5.0, 3 * 31),
        ) {
            let weights: Vec<f64> = parents.iter().map(|&p| 1.0 + (p % 3) as f64).collect();
            let t = random_tree(&parents, &weights);
            let n = t.len();
            let gs: Vec<Vec<f64>> = (0..3).map(|i| seed[i * 31..i * 31 + n].to_vec()).collect();
            let f: Vec<f64> = (0..n).map(|x| gs.iter().map(|g| g[x]).fold(f64::INFINITY, f64::min)).collect();
            let sum: f64 = gs.iter().map(|g| dirichlet_energy(&t, g)).sum();
            prop_assert!(dirichlet_energy(&t, &f) <= sum + 1e-9);
        }

        #[test]
        fn green_identities(
            parents in prop::collection::vec(0usize..1000, 2..40),
            cut in 1usize..6,
            fvals in prop::collection::vec(-3.0f64..3.0, 41),
        ) {
            let weights: Vec<f64> = parents.iter().map(|&p| 1.0 + (p % 4) as f64 * 0.5).collect();
            let t = random_tree(&parents, &weights);
            let n = t.len();
            let dist = t.hop_distances(0);
            let alive: Vec<bool> = dist.iter().map(|&d| (d as usize) < cut).collect();
            let outside: Vec<usize> = (0..n).filter(|&i| !alive[i]).collect();
            prop_assume!(!outside.is_empty());
            let g = GreenSolver::new(&t, &alive).unwrap();
            for x in (0..n).filter(|&i| alive[i]) {
                let col = g.green_column(x);
                let r = effective_resistance(&t, x, &outside).unwrap();
                prop_assert!((col[x] - r).abs() <= 1e-9 * r.max(1.0));
                // reproducing property against f vanishing off the live set
                let f: Vec<f64> = (0..n).map(|i| if alive[i] { fvals[i] } else { 0.0 }).collect();
                prop_assert!((dirichlet_form(&t, &col, &f) - f[x]).abs() < 1e-8);
                // equilibrium potential energy is 1/R
                let e: Vec<f64> = col.iter().map(|v| v / col[x]).collect();
                prop_assert!((dirichlet_energy(&t, &e) - 1.0 / r).abs() < 1e-9 / r.min(1.0));
                for y in (0..n).filter(|&i| alive[i]) {
                    prop_assert!((col[y] - g.green_column(y)[x]).abs() < 1e-9);
                    prop_assert!(col[y] >= 0.0);
                }
            }
        }

        #[test]
        fn kernel_symmetry_and_monotonicity(
            parents in prop::collection::vec(0usize..1000, 1..12),
            cut in 1usize..4,
        ) {
            let weights: Vec<f64> = parents.iter().map(|&p| 1.0 + (p % 2) as f64).collect();
            let t = random_tree(&parents, &weights);
            let n = t.len();
            let whole = vec![true; n];
            let dist = t.hop_distances(0);
            let killed: Vec<bool> = dist.iter().map(|&d| (d as usize) < cut).collect();
            let mut prev_diag = vec![f64::INFINITY; n];
            for &time in &[0.0, 0.5, 2.0, 7.0] {
                let qw = kernel_matrix(&t, &whole, time, 1e-12).unwrap();
                let qk = kernel_matrix(&t, &killed, time, 1e-12).unwrap();
                for x in 0..n {
                    let mass: f64 = (0..n).map(|y| qw.get(x, y) * t.measure(y)).sum();
                    prop_assert!((mass - 1.0).abs() < 1e-10);
                    let kmass: f64 = (0..n).map(|y| qk.get(x, y) * t.measure(y)).sum();
                    prop_assert!(kmass <= 1.0 + 1e-10);
                    prop_assert!(qw.get(x, x) <= prev_diag[x] + 1e-12);
                    prev_diag[x] = qw.get(x, x);
                    for y in 0..n {
                        prop_assert!((qw.get(x, y) - qw.get(y, x)).abs() < 1e-10);
                        prop_assert!((qk.get(x, y) - qk.get(y, x)).abs() < 1e-10);
                        prop_assert!(qk.get(x, y) <= qw.get(x, y) + 1e-10);
                        prop_assert!(qk.get(x, y) >= 0.0);
                    }
                }
            }
        }

        #[test]
        fn continuity_bound(parents in prop::collection::vec(0usize..1000, 1..25)) {
            let weights = vec![1.0; parents.len()];
            let t = random_tree(&parents, &weights);
            let n = t.len();
            let whole = vec![true; n];
            let d = t.hop_distances(0);
            for &time in &[0.5, 3.0, 20.0] {
                let row = &heat_kernel_rows(&t, &whole, 0, &[time], 1e-13).unwrap().rows[0];
                for y in 0..n {
                    let lhs = (row[y] / row[0] - 1.0).powi(2);
                    let rhs = d[y] as f64 / (time * row[0]);
                    prop_assert!(lhs <= rhs + 1e-9);
                }
            }
        }
    }
}
