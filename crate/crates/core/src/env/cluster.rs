use std::collections::VecDeque;

use super::{ClusterSource, VertexId, VertexLabel};
use crate::error::{Error, Result};

/// Index of an explored vertex inside a [`LazyCluster`].
pub type NodeIdx = u32;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Node {
    id: VertexId,
    parent: u32,
    level: u32,
    first_child: u32,
    index: u8,
    n_children: u8,
    backbone: bool,
    expanded: bool,
}

/// The cluster `G` of an environment, explored on demand.
///
/// Vertices are stored in an arena in discovery order. A vertex is expanded
/// (its open children decided and appended) the first time its degree or
/// neighbours are needed; the children of one vertex are contiguous.
/// Exploration order never changes any answer, only the arena numbering.
pub struct LazyCluster<'a, S: ClusterSource + ?Sized> {
    src: &'a S,
    nodes: Vec<Node>,
}

impl<'a, S: ClusterSource + ?Sized> LazyCluster<'a, S> {
    pub const ROOT: NodeIdx = 0;

    pub fn new(src: &'a S) -> Self {
        Self {
            src,
            nodes: vec![Node {
                id: VertexId::ROOT,
                parent: NONE,
                level: 0,
                first_child: NONE,
                index: 0,
                n_children: 0,
                backbone: true,
                expanded: false,
            }],
        }
    }

    pub fn source(&self) -> &'a S {
        self.src
    }

    pub fn n0(&self) -> u32 {
        self.src.n0()
    }

    /// Number of vertices explored so far.
    pub fn explored(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    fn expand(&mut self, v: NodeIdx) {
        let node = self.nodes[v as usize];
        if node.expanded {
            return;
        }
        let first = self.nodes.len() as u32;
        let mut count = 0u8;
        let next_step = if node.backbone {
            self.src.backbone_step(node.level + 1)
        } else {
            0
        };
        for i in 1..=self.src.n0() as u8 {
            let child = node.id.child(i);
            if self.src.edge_open(node.backbone, node.level, child, i) {
                self.nodes.push(Node {
                    id: child,
                    parent: v,
                    level: node.level + 1,
                    first_child: NONE,
                    index: i,
                    n_children: 0,
                    backbone: node.backbone && i == next_step,
                    expanded: false,
                });
                count += 1;
            }
        }
        let n = &mut self.nodes[v as usize];
        n.expanded = true;
        n.first_child = first;
        n.n_children = count;
    }

    #[inline]
    pub fn parent(&self, v: NodeIdx) -> Option<NodeIdx> {
        let p = self.nodes[v as usize].parent;
        (p != NONE).then_some(p)
    }

    #[inline]
    pub fn level(&self, v: NodeIdx) -> u32 {
        self.nodes[v as usize].level
    }

    #[inline]
    pub fn id(&self, v: NodeIdx) -> VertexId {
        self.nodes[v as usize].id
    }

    #[inline]
    pub fn on_backbone(&self, v: NodeIdx) -> bool {
        self.nodes[v as usize].backbone
    }

    /// 1-based child index of `v` under its parent (0 for the root).
    #[inline]
    pub fn child_index(&self, v: NodeIdx) -> u8 {
        self.nodes[v as usize].index
    }

    /// Open children of `v`, as a contiguous index range.
    #[inline]
    pub fn children(&mut self, v: NodeIdx) -> std::ops::Range<NodeIdx> {
        self.expand(v);
        let n = &self.nodes[v as usize];
        n.first_child..n.first_child + n.n_children as u32
    }

    /// `μ_v`: the number of open edges at `v` in the whole cluster.
    #[inline]
    pub fn degree(&mut self, v: NodeIdx) -> u32 {
        self.expand(v);
        let n = &self.nodes[v as usize];
        n.n_children as u32 + u32::from(n.parent != NONE)
    }

    /// The `k`-th neighbour of `v`: the parent first (if any), then the children.
    #[inline]
    pub fn neighbor(&mut self, v: NodeIdx, k: u32) -> NodeIdx {
        self.expand(v);
        let n = &self.nodes[v as usize];
        if n.parent != NONE {
            if k == 0 {
                n.parent
            } else {
                n.first_child + k - 1
            }
        } else {
            n.first_child + k
        }
    }

    /// Neighbours of `v` in the order used by [`Self::neighbor`].
    pub fn neighbors(&mut self, v: NodeIdx) -> Vec<NodeIdx> {
        let d = self.degree(v);
        (0..d).map(|k| self.neighbor(v, k)).collect()
    }

    /// Arena index of `label`, exploring along its root path.
    pub fn locate(&mut self, label: &VertexLabel) -> Result<NodeIdx> {
        let mut v = Self::ROOT;
        for &i in label.path() {
            let found = self.children(v).find(|&c| self.nodes[c as usize].index == i);
            match found {
                Some(c) => v = c,
                None => return Err(Error::NotInCluster(label.to_string())),
            }
        }
        Ok(v)
    }

    pub fn label(&self, v: NodeIdx) -> VertexLabel {
        let mut path = Vec::with_capacity(self.level(v) as usize);
        let mut u = v;
        while let Some(p) = self.parent(u) {
            path.push(self.nodes[u as usize].index);
            u = p;
        }
        path.reverse();
        VertexLabel::new(path).expect("arena indices are 1-based")
    }

    /// Ancestor of `v` `r` levels up, if it exists.
    pub fn ancestor(&self, v: NodeIdx, r: u32) -> Option<NodeIdx> {
        if r > self.level(v) {
            return None;
        }
        let mut u = v;
        for _ in 0..r {
            u = self.nodes[u as usize].parent;
        }
        Some(u)
    }

    /// Deepest common ancestor.
    pub fn meet(&self, x: NodeIdx, y: NodeIdx) -> NodeIdx {
        let (mut a, mut b) = (x, y);
        while self.level(a) > self.level(b) {
            a = self.nodes[a as usize].parent;
        }
        while self.level(b) > self.level(a) {
            b = self.nodes[b as usize].parent;
        }
        while a != b {
            a = self.nodes[a as usize].parent;
            b = self.nodes[b as usize].parent;
        }
        a
    }

    pub fn distance(&self, x: NodeIdx, y: NodeIdx) -> u32 {
        let m = self.meet(x, y);
        self.level(x) + self.level(y) - 2 * self.level(m)
    }

    /// `γ(x, y)`: the unique path from `x` to `y`, both ends included.
    pub fn geodesic(&self, x: NodeIdx, y: NodeIdx) -> Vec<NodeIdx> {
        let m = self.meet(x, y);
        let mut up = Vec::new();
        let mut u = x;
        while u != m {
            up.push(u);
            u = self.nodes[u as usize].parent;
        }
        up.push(m);
        let mut down = Vec::new();
        let mut w = y;
        while w != m {
            down.push(w);
            w = self.nodes[w as usize].parent;
        }
        up.extend(down.into_iter().rev());
        up
    }

    /// Is `y` a descendant of `x` (with `x ∈ D(x)`)?
    pub fn is_descendant(&self, y: NodeIdx, x: NodeIdx) -> bool {
        let (lx, ly) = (self.level(x), self.level(y));
        ly >= lx && self.ancestor(y, ly - lx) == Some(x)
    }

    /// `D_r(x; z)`: descendants of `x` at distance `r` whose line of descent
    /// avoids the branch of `x` toward `z`.
    pub fn descendants(&mut self, x: NodeIdx, r: u32, exclude: NodeIdx) -> Vec<NodeIdx> {
        let skip = if exclude != x && self.is_descendant(exclude, x) {
            self.ancestor(exclude, self.level(exclude) - self.level(x) - 1)
        } else {
            None
        };
        let mut frontier = vec![x];
        for depth in 0..r {
            let mut next = Vec::new();
            for &u in &frontier {
                for c in self.children(u) {
                    if depth == 0 && Some(c) == skip {
                        continue;
                    }
                    next.push(c);
                }
            }
            frontier = next;
        }
        frontier
    }

    /// Breadth-first ball `B(x, r)` plus its outer boundary at distance `r + 1`.
    pub fn explore_ball(&mut self, x: NodeIdx, r: u32) -> ClusterBall {
        let mut vertices: Vec<BallVertex> = Vec::new();
        let mut queue = VecDeque::new();
        vertices.push(BallVertex {
            node: x,
            dist: 0,
            degree: self.degree(x),
            parent: None,
        });
        queue.push_back(0usize);
        while let Some(i) = queue.pop_front() {
            let BallVertex { node, dist, parent, .. } = vertices[i];
            if dist > r {
                continue;
            }
            let from = parent.map(|p| vertices[p].node);
            let d = self.degree(node);
            for k in 0..d {
                let w = self.neighbor(node, k);
                if Some(w) == from {
                    continue;
                }
                vertices.push(BallVertex {
                    node: w,
                    dist: dist + 1,
                    degree: self.degree(w),
                    parent: Some(i),
                });
                queue.push_back(vertices.len() - 1);
            }
        }
        let interior = vertices.iter().take_while(|v| v.dist <= r).count();
        ClusterBall {
            center: x,
            radius: r,
            vertices,
            interior,
        }
    }

    /// Is `x` in the cluster? Explores the root path of `x` only.
    pub fn contains(&mut self, label: &VertexLabel) -> bool {
        self.locate(label).is_ok()
    }
}

/// A vertex of an explored ball.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BallVertex {
    pub node: NodeIdx,
    pub dist: u32,
    /// True cluster degree, counting edges that leave the ball.
    pub degree: u32,
    /// Position of the breadth-first parent within the ball's vertex list.
    pub parent: Option<usize>,
}

/// `B(x, r)` in breadth-first order, followed by `∂B(x, r)`.
#[derive(Clone, Debug)]
pub struct ClusterBall {
    pub center: NodeIdx,
    pub radius: u32,
    vertices: Vec<BallVertex>,
    interior: usize,
}

impl ClusterBall {
    /// Vertices with `d(x, y) ≤ r`, by nondecreasing distance.
    pub fn vertices(&self) -> &[BallVertex] {
        &self.vertices[..self.interior]
    }

    /// Vertices at distance `r + 1`: the outer boundary.
    pub fn boundary(&self) -> &[BallVertex] {
        &self.vertices[self.interior..]
    }

    /// Interior followed by boundary; parents index into this slice.
    pub fn all(&self) -> &[BallVertex] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.interior
    }

    pub fn is_empty(&self) -> bool {
        self.interior == 0
    }

    /// `|B(x, s)|` for `s ≤ r + 1`.
    pub fn size_within(&self, s: u32) -> usize {
        self.vertices.partition_point(|v| v.dist <= s)
    }

    /// `V(x, s) = μ(B(x, s))` for `s ≤ r + 1`.
    pub fn volume_within(&self, s: u32) -> u64 {
        self.vertices
            .iter()
            .take_while(|v| v.dist <= s)
            .map(|v| v.degree as u64)
            .sum()
    }

    /// `V(x, r)`.
    pub fn volume(&self) -> u64 {
        self.volume_within(self.radius)
    }

    /// Position of the ancestor (toward the centre) of ball vertex `i` at distance `s`.
    pub fn toward_center(&self, mut i: usize, s: u32) -> usize {
        while self.vertices[i].dist > s {
            i = self.vertices[i].parent.expect("only the centre lacks a parent");
        }
        i
    }

    /// Position of `node` in the ball, if present.
    pub fn position(&self, node: NodeIdx) -> Option<usize> {
        self.vertices.iter().position(|v| v.node == node)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{contains, Environment, ScriptedEnvironment};

    #[test]
    fn root_ball_has_true_degree() {
        let env = Environment::new(3, 5).unwrap();
        let mut g = LazyCluster::new(&env);
        let ball = g.explore_ball(LazyCluster::<Environment>::ROOT, 0);
        assert_eq!(ball.len(), 1);
        let d = g.degree(0);
        assert!(d >= 1);
        assert_eq!(ball.volume(), d as u64);
        assert_eq!(ball.boundary().len(), d as usize);
    }

    #[test]
    fn locate_matches_membership() {
        let env = Environment::new(2, 17).unwrap();
        let mut g = LazyCluster::new(&env);
        for bits in 0u32..(1 << 6) {
            let path: Vec<u8> = (0..6).map(|k| ((bits >> k) & 1) as u8 + 1).collect();
            let label = VertexLabel::new(path).unwrap();
            assert_eq!(g.locate(&label).is_ok(), contains(&env, &label));
            if let Ok(v) = g.locate(&label) {
                assert_eq!(g.label(v), label);
            }
        }
        let missing = VertexLabel::new(vec![9]).unwrap();
        assert!(matches!(g.locate(&missing), Err(Error::NotInCluster(_))));
    }

    #[test]
    fn ball_distances_match_level_arithmetic() {
        for seed in 0..20 {
            let env = Environment::new(2, seed).unwrap();
            let mut g = LazyCluster::new(&env);
            let x = g.locate(&crate::env::backbone_label(&env, 10)).unwrap();
            let ball = g.explore_ball(x, 12);
            for v in ball.all() {
                assert_eq!(g.distance(x, v.node), v.dist);
                let lx = g.label(x);
                assert_eq!(lx.distance(&g.label(v.node)), v.dist as usize);
                assert_eq!(g.geodesic(x, v.node).len() as u32, v.dist + 1);
            }
            // acyclic: each vertex appears once
            let mut nodes: Vec<_> = ball.all().iter().map(|v| v.node).collect();
            nodes.sort_unstable();
            nodes.dedup();
            assert_eq!(nodes.len(), ball.all().len());
        }
    }

    #[test]
    fn volume_sandwich() {
        let mut checked = 0;
        for seed in 0..100 {
            let env = Environment::new(2, seed).unwrap();
            let mut g = LazyCluster::new(&env);
            for &r in &[0u32, 1, 3, 7, 15, 31, 63, 100, 200, 400] {
                let ball = g.explore_ball(0, r);
                let v = ball.volume();
                assert!(ball.len() as u64 <= v);
                assert!(v <= 2 * ball.size_within(r + 1) as u64);
                checked += 1;
            }
        }
        assert_eq!(checked, 1000);
    }

    #[test]
    fn geodesic_to_self_is_single_vertex() {
        let env = Environment::new(2, 3).unwrap();
        let mut g = LazyCluster::new(&env);
        let x = g.locate(&crate::env::backbone_label(&env, 5)).unwrap();
        assert_eq!(g.geodesic(x, x), vec![x]);
    }

    #[test]
    fn descendants_exclude_branch() {
        // Full binary fragment: open (1), (2), (1,1), (1,2), (2,1).
        let env = ScriptedEnvironment::bare_backbone(2)
            .unwrap()
            .open_path(&VertexLabel::new(vec![1, 2]).unwrap())
            .open_path(&VertexLabel::new(vec![2, 1]).unwrap());
        let mut g = LazyCluster::new(&env);
        let z = g.locate(&VertexLabel::new(vec![1, 2]).unwrap()).unwrap();
        let d2 = g.descendants(0, 2, 0);
        assert_eq!(d2.len(), 3);
        let d2z = g.descendants(0, 2, z);
        let labels: Vec<_> = d2z.iter().map(|&v| g.label(v)).collect();
        assert_eq!(labels, vec![VertexLabel::new(vec![2, 1]).unwrap()]);
    }

    #[test]
    fn backbone_unique_to_depth() {
        // Exactly one vertex per level among those with descendants 40 levels down
        // is on the backbone, and the backbone always reaches.
        for seed in 0..30 {
            let env = Environment::new(2, seed).unwrap();
            let mut g = LazyCluster::new(&env);
            let mut frontier = vec![0u32];
            for _ in 0..60 {
                frontier = frontier.iter().flat_map(|&u| g.children(u)).collect();
            }
            let on: Vec<_> = frontier.iter().filter(|&&v| g.on_backbone(v)).collect();
            assert_eq!(on.len(), 1);
        }
    }

    #[test]
    fn is_open_agrees_with_adjacency() {
        let env = Environment::new(3, 77).unwrap();
        let mut g = LazyCluster::new(&env);
        let ball = g.explore_ball(0, 6);
        for v in ball.vertices() {
            let label = g.label(v.node);
            let open: Vec<u8> = (1..=3)
                .filter(|&i| crate::env::is_open(&env, &label, i).unwrap())
                .collect();
            let kids: Vec<u8> = g.children(v.node).map(|c| g.child_index(c)).collect();
            assert_eq!(open, kids);
        }
    }
}
