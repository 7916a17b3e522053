use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::formats::{BinReader, BinWriter};

use super::kmeans::{kmeans, nearest};

pub const CLUSTER_MAGIC: [u8; 4] = *b"LLCM";
pub const CLUSTER_VERSION: u16 = 1;

/// Two-level label attached to each training frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HierLabel {
    pub level1: usize,
    pub level2: usize,
}

/// Centers of a two-level partition of training positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    dim: usize,
    level1: Vec<Vec<f64>>,
    level2: Vec<Vec<Vec<f64>>>,
}

impl ClusterModel {
    pub fn new(level1: Vec<Vec<f64>>, level2: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let dim = level1.first().map(Vec::len).unwrap_or(0);
        if level1.is_empty() || dim == 0 {
            return Err(Error::ShapeMismatch("cluster model needs non-empty centers".into()));
        }
        if level2.len() != level1.len() {
            return Err(Error::ShapeMismatch("one level-2 group per level-1 center".into()));
        }
        let k2 = level2[0].len();
        if k2 == 0 || level2.iter().any(|g| g.len() != k2) {
            return Err(Error::ShapeMismatch("level-2 groups differ in size".into()));
        }
        let all = level1.iter().chain(level2.iter().flatten());
        for c in all {
            if c.len() != dim || !c.iter().all(|v| v.is_finite()) {
                return Err(Error::ShapeMismatch("center dimension or value invalid".into()));
            }
        }
        Ok(Self { dim, level1, level2 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k1(&self) -> usize {
        self.level1.len()
    }

    pub fn k2(&self) -> usize {
        self.level2[0].len()
    }

    pub fn level1_centers(&self) -> &[Vec<f64>] {
        &self.level1
    }

    pub fn level2_centers(&self, l1: usize) -> &[Vec<f64>] {
        &self.level2[l1]
    }

    pub fn leaf_index(&self, label: HierLabel) -> usize {
        label.level1 * self.k2() + label.level2
    }

    pub fn leaf_center(&self, label: HierLabel) -> &[f64] {
        &self.level2[label.level1][label.level2]
    }

    /// Nearest level-1 center, then nearest level-2 center inside it.
    pub fn label_of(&self, point: &[f64]) -> HierLabel {
        let level1 = nearest(point, &self.level1);
        HierLabel {
            level1,
            level2: nearest(point, &self.level2[level1]),
        }
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<W> {
        let mut w = BinWriter::new(out, CLUSTER_MAGIC, CLUSTER_VERSION)?;
        w.len(self.dim)?;
        w.len(self.k1())?;
        w.len(self.k2())?;
        for c in &self.level1 {
            w.f64s(c.iter().copied())?;
        }
        for c in self.level2.iter().flatten() {
            w.f64s(c.iter().copied())?;
        }
        Ok(w.finish())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.write_to(Vec::new()).expect("writing to memory cannot fail")
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = BinReader::new(input, CLUSTER_MAGIC, CLUSTER_VERSION)?;
        let dim = r.len()?;
        let k1 = r.len()?;
        let k2 = r.len()?;
        let level1 = (0..k1).map(|_| r.f64s(dim)).collect::<Result<Vec<_>>>()?;
        let level2 = (0..k1)
            .map(|_| (0..k2).map(|_| r.f64s(dim)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::new(level1, level2)
    }
}

/// Level-2 seeds are derived from the level-1 seed so every sub-problem is
/// reproducible on its own.
fn sub_seed(seed: u64, cluster: usize) -> u64 {
    seed ^ (cluster as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Clusters `points` into `k1` groups, then each group into `k2` sub-groups.
/// Returns the model and one label per point.
pub fn build_hierarchy(
    points: &[Vec<f64>],
    k1: usize,
    k2: usize,
    seed: u64,
    max_iterations: usize,
) -> Result<(ClusterModel, Vec<HierLabel>)> {
    let top = kmeans(points, k1, seed, max_iterations)?;
    let mut labels = vec![HierLabel { level1: 0, level2: 0 }; points.len()];
    let mut level2 = Vec::with_capacity(k1);
    for c in 0..k1 {
        let members: Vec<usize> = (0..points.len()).filter(|&i| top.assignments[i] == c).collect();
        let subset: Vec<Vec<f64>> = members.iter().map(|&i| points[i].clone()).collect();
        if subset.len() < k2 {
            return Err(Error::TooFewSamples {
                have: subset.len(),
                need: k2,
            });
        }
        let fit = kmeans(&subset, k2, sub_seed(seed, c), max_iterations)?;
        for (&i, &a) in members.iter().zip(&fit.assignments) {
            labels[i] = HierLabel { level1: c, level2: a };
        }
        level2.push(fit.centers);
    }
    Ok((ClusterModel::new(top.centers, level2)?, labels))
}
