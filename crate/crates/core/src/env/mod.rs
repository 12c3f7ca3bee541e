//! Seeded virtual IIC on the `n0`-ary tree.
//!
//! The cluster is the open component of the root when a uniformly random
//! descending path (the backbone) is forced open and every other edge is
//! open independently with probability `1/n0`. Every coin is a counter-based
//! function of the environment seed, so nothing has to be stored and any
//! query can be repeated, in any order, on any thread.

mod cluster;
mod geometry;
mod volume;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prf::{below, domain_key, mix64};

pub use cluster::{BallVertex, ClusterBall, LazyCluster, NodeIdx};
pub use geometry::{
    check_f1, check_fstar, check_g2, check_g3, cut_count, is_lambda_good, lambda_good_at,
    G3Config, G3Report, GoodnessChecker, GoodnessReport, LAMBDA_MIN,
};
pub use volume::{volume_profile, VolumeProfile};

/// A vertex of the ambient tree as its path of 1-based child indices from the root.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexLabel {
    path: Vec<u8>,
}

impl VertexLabel {
    pub fn root() -> Self {
        Self { path: Vec::new() }
    }

    pub fn new(path: Vec<u8>) -> Result<Self> {
        if path.contains(&0) {
            return Err(Error::domain("child indices are 1-based"));
        }
        Ok(Self { path })
    }

    pub fn path(&self) -> &[u8] {
        &self.path
    }

    pub fn level(&self) -> usize {
        self.path.len()
    }

    pub fn is_root(&self) -> bool {
        self.path.is_empty()
    }

    pub fn child(&self, index: u8) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self { path }
    }

    /// `a(x, r)`: the ancestor `r` levels up.
    pub fn ancestor(&self, r: usize) -> Result<Self> {
        if r > self.level() {
            return Err(Error::domain(format!(
                "ancestor distance {r} exceeds level {}",
                self.level()
            )));
        }
        Ok(Self {
            path: self.path[..self.level() - r].to_vec(),
        })
    }

    /// Level of the deepest common ancestor.
    pub fn meet_level(&self, other: &Self) -> usize {
        self.path
            .iter()
            .zip(&other.path)
            .take_while(|(a, b)| a == b)
            .count()
    }

    /// Tree distance `|x| + |y| - 2 |x ∧ y|`.
    pub fn distance(&self, other: &Self) -> usize {
        self.level() + other.level() - 2 * self.meet_level(other)
    }

    pub fn id(&self) -> VertexId {
        self.path
            .iter()
            .fold(VertexId::ROOT, |id, &i| id.child(i))
    }
}

impl fmt::Display for VertexLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(0")?;
        for l in &self.path {
            write!(f, ",{l}")?;
        }
        write!(f, ")")
    }
}

/// 128-bit hash of a vertex's path, built incrementally from the root.
///
/// Distinct vertices collide with probability about `k^2 / 2^129` among `k`
/// vertices, far below anything observable at desk scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId {
    pub hi: u64,
    pub lo: u64,
}

impl VertexId {
    pub const ROOT: VertexId = VertexId {
        hi: 0x243F_6A88_85A3_08D3,
        lo: 0x1319_8A2E_0370_7344,
    };

    #[inline]
    pub fn child(self, index: u8) -> VertexId {
        let i = index as u64;
        VertexId {
            hi: mix64(self.hi ^ self.lo.rotate_left(23) ^ i.wrapping_mul(0xA076_1D64_78BD_642F)),
            lo: mix64(
                self.lo.wrapping_add(0xE703_7ED1_A0B4_28DB)
                    ^ self.hi.rotate_left(41)
                    ^ i.wrapping_mul(0x8EBC_6AF0_9C88_C6E3),
            ),
        }
    }
}

/// Anything that can decide the IIC's coins: which child continues the
/// backbone at each level, and whether an off-backbone edge is open.
pub trait ClusterSource: Sync {
    fn n0(&self) -> u32;

    /// The 1-based child index `ξ_level` taken by the backbone from level `level - 1`.
    fn backbone_step(&self, level: u32) -> u8;

    /// Openness of the edge into `child` when that edge is not a backbone edge.
    fn off_backbone_open(&self, child: VertexId) -> bool;

    /// `η~` for the edge from a parent at `parent_level` to its child `index`.
    #[inline]
    fn edge_open(&self, parent_on_backbone: bool, parent_level: u32, child: VertexId, index: u8) -> bool {
        (parent_on_backbone && index == self.backbone_step(parent_level + 1))
            || self.off_backbone_open(child)
    }
}

const EDGE_DOMAIN: u64 = 1;
const BACKBONE_DOMAIN: u64 = 2;

/// Version of the [`EnvDescriptor`] record.
pub const ENV_FORMAT_VERSION: u32 = 1;

/// A virtual IIC realization: a pure function of `(n0, seed)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Environment {
    n0: u32,
    seed: u64,
    edge_key: u64,
    backbone_key: u64,
    open_threshold: u64,
}

impl Environment {
    pub fn new(n0: u32, seed: u64) -> Result<Self> {
        if !(2..=255).contains(&n0) {
            return Err(Error::domain(format!("n0 must lie in 2..=255, got {n0}")));
        }
        Ok(Self {
            n0,
            seed,
            edge_key: domain_key(seed, EDGE_DOMAIN),
            backbone_key: domain_key(seed, BACKBONE_DOMAIN),
            // P(word < threshold) = 1/n0 up to 2^-64.
            open_threshold: (u64::MAX / n0 as u64) + u64::from(n0 == 2),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn descriptor(&self) -> EnvDescriptor {
        EnvDescriptor {
            format_version: ENV_FORMAT_VERSION,
            n0: self.n0,
            seed: self.seed,
        }
    }
}

impl ClusterSource for Environment {
    fn n0(&self) -> u32 {
        self.n0
    }

    #[inline]
    fn backbone_step(&self, level: u32) -> u8 {
        let word = mix64(self.backbone_key ^ mix64(level as u64));
        below(word, self.n0 as u64) as u8 + 1
    }

    #[inline]
    fn off_backbone_open(&self, child: VertexId) -> bool {
        mix64(self.edge_key ^ child.lo ^ child.hi.rotate_left(32)) < self.open_threshold
    }
}

/// Serializable record that re-creates an [`Environment`] bit-identically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvDescriptor {
    pub format_version: u32,
    pub n0: u32,
    pub seed: u64,
}

impl EnvDescriptor {
    pub fn environment(&self) -> Result<Environment> {
        if self.format_version != ENV_FORMAT_VERSION {
            return Err(Error::domain(format!(
                "unsupported environment format version {}",
                self.format_version
            )));
        }
        Environment::new(self.n0, self.seed)
    }
}

/// Hand-built environment: a fixed backbone plus an explicit set of open
/// off-backbone edges. Used for constructed test fragments.
#[derive(Clone, Debug)]
pub struct ScriptedEnvironment {
    n0: u32,
    backbone: Vec<u8>,
    open: HashSet<VertexId>,
}

impl ScriptedEnvironment {
    /// Backbone along child 1 at every level, nothing else open.
    pub fn bare_backbone(n0: u32) -> Result<Self> {
        if !(2..=255).contains(&n0) {
            return Err(Error::domain(format!("n0 must lie in 2..=255, got {n0}")));
        }
        Ok(Self {
            n0,
            backbone: Vec::new(),
            open: HashSet::new(),
        })
    }

    /// Backbone steps for the first levels; child 1 afterwards.
    pub fn with_backbone(mut self, steps: &[u8]) -> Self {
        self.backbone = steps.to_vec();
        self
    }

    /// Open every edge along the path from the root to `label`.
    pub fn open_path(mut self, label: &VertexLabel) -> Self {
        let mut id = VertexId::ROOT;
        for &i in label.path() {
            id = id.child(i);
            self.open.insert(id);
        }
        self
    }
}

impl ClusterSource for ScriptedEnvironment {
    fn n0(&self) -> u32 {
        self.n0
    }

    fn backbone_step(&self, level: u32) -> u8 {
        self.backbone
            .get(level as usize - 1)
            .copied()
            .unwrap_or(1)
    }

    fn off_backbone_open(&self, child: VertexId) -> bool {
        self.open.contains(&child)
    }
}

/// The first `levels` backbone vertices as a label.
pub fn backbone_label<S: ClusterSource + ?Sized>(src: &S, levels: usize) -> VertexLabel {
    VertexLabel {
        path: (1..=levels as u32).map(|l| src.backbone_step(l)).collect(),
    }
}

/// Is `label` on the backbone?
pub fn on_backbone<S: ClusterSource + ?Sized>(src: &S, label: &VertexLabel) -> bool {
    label
        .path()
        .iter()
        .enumerate()
        .all(|(i, &step)| src.backbone_step(i as u32 + 1) == step)
}

/// `η~` of the edge from `parent` to its child `index`.
pub fn is_open<S: ClusterSource + ?Sized>(src: &S, parent: &VertexLabel, index: u8) -> Result<bool> {
    if index == 0 || index as u32 > src.n0() {
        return Err(Error::domain(format!(
            "child index {index} outside 1..={}",
            src.n0()
        )));
    }
    Ok(src.edge_open(
        on_backbone(src, parent),
        parent.level() as u32,
        parent.id().child(index),
        index,
    ))
}

/// `x ∈ G`: every edge on the root path of `x` is open. Cost `O(|x|)`.
pub fn contains<S: ClusterSource + ?Sized>(src: &S, x: &VertexLabel) -> bool {
    let mut id = VertexId::ROOT;
    let mut backbone = true;
    for (level, &i) in x.path().iter().enumerate() {
        let child = id.child(i);
        if !src.edge_open(backbone, level as u32, child, i) {
            return false;
        }
        backbone = backbone && src.backbone_step(level as u32 + 1) == i;
        id = child;
    }
    true
}
