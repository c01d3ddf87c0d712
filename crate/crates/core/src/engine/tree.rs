use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::EngineConfig;
use crate::error::{Error, Result};
use crate::geometry::{coarse_position, copy_box, trilinear, Region};
use crate::octree::{NodeAddress, OctreeVolume, Residency, TreeGeometry, ValueKind, VolumeMeta};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    /// Solved; children processed (or none exist).
    Computed,
    /// Solved and stored; children skipped because the range is below `t_hom`.
    PrunedHom,
    /// Solved and stored; children skipped because the outcome is decided.
    PrunedDt,
    /// Copied from the previous solution.
    Reused,
    /// Never written.
    #[default]
    Absent,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub status: NodeStatus,
    /// Seeds conflict inside the node's brick.
    pub conflict: bool,
}

/// Outcome of the pruning test on a solved node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prune {
    Keep,
    Hom,
    Dt,
}

/// `(hom ∨ dt) ∧ ¬conflict`, with disabled criteria never firing.
pub fn prunable(stats: (f32, f32), conflict: bool, cfg: &EngineConfig) -> Prune {
    let (min, max) = (stats.0 as f64, stats.1 as f64);
    if conflict {
        Prune::Keep
    } else if cfg.pruning.hom_enabled && max - min < cfg.t_hom {
        Prune::Hom
    } else if cfg.pruning.dt_enabled && (min - 0.5 > cfg.t_bin || 0.5 - max > cfg.t_bin) {
        Prune::Dt
    } else {
        Prune::Keep
    }
}

/// Per-level node counts by status.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub computed: usize,
    pub pruned_hom: usize,
    pub pruned_dt: usize,
    pub reused: usize,
    pub absent: usize,
}

impl StatusCounts {
    pub fn total(&self) -> usize {
        self.computed + self.pruned_hom + self.pruned_dt + self.reused + self.absent
    }

    pub fn present(&self) -> usize {
        self.total() - self.absent
    }
}

/// Foreground-probability pyramid produced by one run.
pub struct ProbabilityTree {
    class_id: u32,
    volume: OctreeVolume,
    records: Vec<Vec<NodeRecord>>,
    /// Backing file is removed on drop.
    pub(crate) scratch: bool,
}

impl Drop for ProbabilityTree {
    fn drop(&mut self) {
        if self.scratch {
            if let Some(p) = self.volume.path() {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

impl ProbabilityTree {
    /// An empty output tree shaped like `input`, in memory or at `path`.
    pub fn create(input: &OctreeVolume, class_id: u32, path: Option<&Path>) -> Result<Self> {
        let mut meta = VolumeMeta::new(input.meta().dims, ValueKind::Probability, crate::octree::SourceDtype::F32);
        meta.spacing = input.meta().spacing;
        let s = input.brick_side();
        let volume = match path {
            Some(p) => OctreeVolume::create_file(p, meta, s)?,
            None => OctreeVolume::in_memory(meta, s)?,
        };
        let g = *volume.geometry();
        let records = (0..g.levels()).map(|l| vec![NodeRecord::default(); g.node_count(l)]).collect();
        Ok(ProbabilityTree {
            class_id,
            volume,
            records,
            scratch: false,
        })
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn volume(&self) -> &OctreeVolume {
        &self.volume
    }

    pub fn geometry(&self) -> &TreeGeometry {
        self.volume.geometry()
    }

    pub fn record(&self, addr: NodeAddress) -> NodeRecord {
        self.records[addr.level as usize][self.geometry().node_index(addr)]
    }

    pub fn status(&self, addr: NodeAddress) -> NodeStatus {
        self.record(addr).status
    }

    pub(crate) fn set_record(&mut self, addr: NodeAddress, record: NodeRecord) {
        let i = self.geometry().node_index(addr);
        self.records[addr.level as usize][i] = record;
    }

    pub fn counts(&self, level: u32) -> StatusCounts {
        let mut c = StatusCounts::default();
        for r in &self.records[level as usize] {
            match r.status {
                NodeStatus::Computed => c.computed += 1,
                NodeStatus::PrunedHom => c.pruned_hom += 1,
                NodeStatus::PrunedDt => c.pruned_dt += 1,
                NodeStatus::Reused => c.reused += 1,
                NodeStatus::Absent => c.absent += 1,
            }
        }
        c
    }

    /// Materializes `region` at `level`, filling absent bricks from their nearest stored ancestor.
    pub fn fill_region(&self, level: u32, region: &Region) -> Result<Vec<f32>> {
        fill_region(&self.volume, level, region, &Residency::new())
    }

    /// Writes the probability pyramid as an HROV1 file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.volume.save_as(path).map(drop)
    }
}

/// Values of `region` at `level`, taken from stored bricks where present and
/// trilinearly upsampled from the coarser level elsewhere, recursively up to
/// the root. Interpolation spans neighboring coarse bricks; only the volume
/// border clamps.
pub fn fill_region(tree: &OctreeVolume, level: u32, region: &Region, residency: &Arc<Residency>) -> Result<Vec<f32>> {
    let g = tree.geometry();
    if !g.level_region(level).contains_region(region) || region.is_empty() {
        return Err(Error::InvalidArgument(format!("region {region:?} outside level {level}")));
    }
    let mut out = vec![0f32; region.volume()];
    let mut missing = Vec::new();
    for b in g.bricks_overlapping(level, region) {
        let br = g.brick_region(b);
        let part = br.intersect(region);
        match tree.read_brick_tracked(b, residency)? {
            Some(brick) => copy_box(brick.voxels(), &br, &mut out, region, &part),
            None => missing.push(part),
        }
    }
    if missing.is_empty() {
        return Ok(out);
    }
    if level == 0 {
        return Err(Error::Invariant("root node is absent; nothing to sample from".into()));
    }
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for part in &missing {
        let ph = part.hi();
        for a in 0..3 {
            lo[a] = lo[a].min(part.origin[a]);
            hi[a] = hi[a].max(ph[a]);
        }
    }
    let parent_dims = g.level_dims(level - 1);
    let clo = lo.map(|v| (v / 2).saturating_sub(1));
    let chi = [0, 1, 2].map(|a| ((hi[a] - 1) / 2 + 2).min(parent_dims[a]));
    let coarse = Region::from_bounds(clo, chi);
    let values = fill_region(tree, level - 1, &coarse, residency)?;
    for part in &missing {
        for p in part.positions() {
            let pos = [0, 1, 2].map(|a| coarse_position(p[a], 1) - coarse.origin[a] as f64);
            let i = crate::geometry::linear(region.extent, [0, 1, 2].map(|a| p[a] - region.origin[a]));
            out[i] = trilinear(&values, coarse.extent, pos) as f32;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::octree::Brick;

    fn cfg() -> EngineConfig {
        EngineConfig::default()
    }

    #[test]
    fn prune_rules() {
        assert_eq!(prunable((0.5, 0.5), false, &cfg()), Prune::Hom);
        assert_eq!(prunable((0.52, 0.9), false, &cfg()), Prune::Dt);
        assert_eq!(prunable((0.1, 0.6), true, &cfg()), Prune::Keep);
        assert_eq!(prunable((0.1, 0.6), false, &cfg()), Prune::Keep);
        assert_eq!(prunable((0.0, 0.45), false, &cfg()), Prune::Dt);
        let mut c = cfg();
        c.pruning.hom_enabled = false;
        assert_eq!(prunable((0.5, 0.5), false, &c), Prune::Keep);
        assert_eq!(prunable((0.6, 0.61), false, &c), Prune::Dt);
        c.pruning.dt_enabled = false;
        assert_eq!(prunable((0.6, 0.61), false, &c), Prune::Keep);
    }

    fn output(dims: [usize; 3], s: usize) -> OctreeVolume {
        let meta = VolumeMeta::new(dims.map(|d| d as u64), ValueKind::Probability, crate::octree::SourceDtype::F32);
        OctreeVolume::in_memory(meta, s).unwrap()
    }

    #[test]
    fn fill_from_grandparent() {
        let t = output([16; 3], 4);
        t.write_brick(NodeAddress::ROOT, &Brick::constant([4; 3], 0.8)).unwrap();
        let out = fill_region(&t, 2, &Region::new([3, 5, 7], [6, 4, 2]), &Residency::new()).unwrap();
        assert!(out.iter().all(|&v| (v - 0.8).abs() < 1e-7));
    }

    #[test]
    fn fill_prefers_stored_bricks() {
        let t = output([8; 3], 4);
        t.write_brick(NodeAddress::ROOT, &Brick::constant([4; 3], 0.2)).unwrap();
        t.write_brick(NodeAddress::new(1, [1, 0, 0]), &Brick::constant([4; 3], 0.9)).unwrap();
        let out = fill_region(&t, 1, &Region::new([0; 3], [8, 1, 1]), &Residency::new()).unwrap();
        assert_eq!(&out[4..], &[0.9; 4]);
        assert!(out[..4].iter().all(|&v| (v - 0.2).abs() < 1e-7));
    }

    #[test]
    fn fill_interpolates_across_coarse_bricks() {
        // Level 1 holds a ramp in x over two bricks; level 2 is empty.
        let t = output([16, 4, 4], 4);
        let ramp = |x0: usize| {
            Brick::new([4, 2, 2], (0..16).map(|i| (x0 + i % 4) as f32 / 7.0).collect()).unwrap()
        };
        t.write_brick(NodeAddress::ROOT, &Brick::constant([4, 1, 1], 0.5)).unwrap();
        t.write_brick(NodeAddress::new(1, [0, 0, 0]), &ramp(0)).unwrap();
        t.write_brick(NodeAddress::new(1, [1, 0, 0]), &ramp(4)).unwrap();
        let out = fill_region(&t, 2, &Region::new([0, 0, 0], [16, 1, 1]), &Residency::new()).unwrap();
        for (x, v) in out.iter().enumerate() {
            let u = ((x as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, 7.0);
            assert!((*v as f64 - u / 7.0).abs() < 1e-6, "x={x}: {v}");
        }
    }

    #[test]
    fn absent_root_is_invariant_error() {
        let t = output([8; 3], 4);
        assert!(matches!(
            fill_region(&t, 1, &Region::new([0; 3], [2; 3]), &Residency::new()),
            Err(Error::Invariant(_))
        ));
    }
}
