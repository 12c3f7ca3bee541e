use serde::{Deserialize, Serialize};

use super::{ClusterSource, VertexId, VertexLabel};
use crate::error::{Error, Result};

/// Shell counts of `B(x, r_max)`: how many vertices sit at each distance
/// and the sum of their degrees.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeProfile {
    pub counts: Vec<u64>,
    pub degree_sums: Vec<u64>,
}

impl VolumeProfile {
    pub fn r_max(&self) -> u32 {
        self.counts.len() as u32 - 1
    }

    /// `|B(x, s)|`.
    pub fn size_within(&self, s: u32) -> u64 {
        self.counts[..=s.min(self.r_max()) as usize].iter().sum()
    }

    /// `V(x, s)`.
    pub fn volume_within(&self, s: u32) -> u64 {
        self.degree_sums[..=s.min(self.r_max()) as usize].iter().sum()
    }

    /// `V(x, s)` for every `s ≤ r_max`.
    pub fn cumulative_volumes(&self) -> Vec<u64> {
        self.degree_sums
            .iter()
            .scan(0u64, |acc, &d| {
                *acc += d;
                Some(*acc)
            })
            .collect()
    }
}

struct Frame {
    id: VertexId,
    level: u32,
    backbone: bool,
    dist: u32,
}

/// Volume profile of `B(x, r_max)` without storing the ball.
///
/// Walks up the ancestors of `x` and runs a depth-first count over each
/// side branch, so memory stays proportional to the depth, not the volume.
pub fn volume_profile<S: ClusterSource + ?Sized>(
    src: &S,
    x: &VertexLabel,
    r_max: u32,
) -> Result<VolumeProfile> {
    let n0 = src.n0() as u8;
    // Root path of x with backbone flags.
    let mut ids = vec![VertexId::ROOT];
    let mut bb = vec![true];
    for (l, &i) in x.path().iter().enumerate() {
        let id = ids[l].child(i);
        if !src.edge_open(bb[l], l as u32, id, i) {
            return Err(Error::NotInCluster(x.to_string()));
        }
        bb.push(bb[l] && src.backbone_step(l as u32 + 1) == i);
        ids.push(id);
    }
    let top = x.level();
    let mut counts = vec![0u64; r_max as usize + 1];
    let mut degree_sums = vec![0u64; r_max as usize + 1];
    let mut stack: Vec<Frame> = Vec::new();

    let visit = |f: Frame, skip: u8, stack: &mut Vec<Frame>, counts: &mut [u64], sums: &mut [u64]| {
        let step = if f.backbone { src.backbone_step(f.level + 1) } else { 0 };
        let mut degree = u64::from(f.level > 0);
        for i in 1..=n0 {
            let child = f.id.child(i);
            if src.edge_open(f.backbone, f.level, child, i) {
                degree += 1;
                if i != skip && f.dist < r_max {
                    stack.push(Frame {
                        id: child,
                        level: f.level + 1,
                        backbone: f.backbone && i == step,
                        dist: f.dist + 1,
                    });
                }
            }
        }
        counts[f.dist as usize] += 1;
        sums[f.dist as usize] += degree;
    };

    for j in 0..=top.min(r_max as usize) {
        let l = top - j;
        let skip = if j == 0 { 0 } else { x.path()[l] };
        visit(
            Frame {
                id: ids[l],
                level: l as u32,
                backbone: bb[l],
                dist: j as u32,
            },
            skip,
            &mut stack,
            &mut counts,
            &mut degree_sums,
        );
        while let Some(f) = stack.pop() {
            visit(f, 0, &mut stack, &mut counts, &mut degree_sums);
        }
    }
    Ok(VolumeProfile {
        counts,
        degree_sums,
    })
}
