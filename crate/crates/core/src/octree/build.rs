use serde::{Deserialize, Serialize};

use super::{Brick, NodeAddress, OctreeVolume};
use crate::error::{Error, Result};
use crate::geometry::Extent;

/// Instrumentation of a streaming build.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    /// Peak number of bricks' worth of voxels buffered by the builder.
    pub peak_resident_bricks: usize,
    /// One slab (brick row over x and y) per level.
    pub resident_bound: usize,
    pub bricks_written: usize,
}

struct LevelAccum {
    dims: Extent,
    grid: Extent,
    slab: Vec<f32>,
    planes: usize,
    next_z: usize,
    pending: Option<Vec<f32>>,
}

/// Builds the pyramid bottom-up from full-resolution z-planes.
///
/// Each level keeps one slab of `s` planes; a full slab is cut into bricks and
/// written, and every pair of planes is mean-downsampled into the next coarser
/// level. Voxels missing at the volume border are left out of the mean.
pub struct OctreeBuilder {
    tree: OctreeVolume,
    accums: Vec<LevelAccum>,
    stats: BuildStats,
}

impl OctreeBuilder {
    /// `tree` must be empty; it receives every brick of the pyramid.
    pub fn new(tree: OctreeVolume) -> Self {
        let g = *tree.geometry();
        let s = g.brick_side();
        let accums = (0..g.levels())
            .map(|level| {
                let dims = g.level_dims(level);
                LevelAccum {
                    dims,
                    grid: g.grid_dims(level),
                    slab: vec![0.0; dims[0] * dims[1] * s.min(dims[2])],
                    planes: 0,
                    next_z: 0,
                    pending: None,
                }
            })
            .collect::<Vec<_>>();
        let resident_bound = accums.iter().map(|a| a.grid[0] * a.grid[1]).sum();
        OctreeBuilder {
            tree,
            accums,
            stats: BuildStats {
                resident_bound,
                ..Default::default()
            },
        }
    }

    /// Adds the next full-resolution plane (x fastest), normalized to `[0, 1]`.
    pub fn push_plane(&mut self, plane: Vec<f32>) -> Result<()> {
        let leaf = self.tree.geometry().leaf_level();
        let d = self.accums[leaf as usize].dims;
        if plane.len() != d[0] * d[1] {
            return Err(Error::InvalidArgument(format!(
                "plane has {} voxels, expected {}",
                plane.len(),
                d[0] * d[1]
            )));
        }
        if self.accums[leaf as usize].next_z >= d[2] {
            return Err(Error::InvalidArgument(format!(
                "volume has only {} planes",
                d[2]
            )));
        }
        self.push(leaf, plane)
    }

    fn push(&mut self, mut level: u32, mut plane: Vec<f32>) -> Result<()> {
        let s = self.tree.brick_side();
        loop {
            let acc = &mut self.accums[level as usize];
            let z = acc.next_z;
            acc.next_z += 1;
            let last = z + 1 == acc.dims[2];
            let n = acc.dims[0] * acc.dims[1];
            acc.slab[acc.planes * n..(acc.planes + 1) * n].copy_from_slice(&plane);
            acc.planes += 1;
            let full = acc.planes == s || last;
            self.note_residency();
            if full {
                self.flush_slab(level, z / s)?;
            }
            if level == 0 {
                return Ok(());
            }
            let acc = &mut self.accums[level as usize];
            if z.is_multiple_of(2) && !last {
                acc.pending = Some(plane);
                return Ok(());
            }
            let first = acc.pending.take();
            let dims = acc.dims;
            plane = downsample_planes(first.as_deref(), &plane, dims);
            level -= 1;
        }
    }

    fn note_residency(&mut self) {
        let now: usize = self
            .accums
            .iter()
            .filter(|a| a.planes > 0 || a.pending.is_some())
            .map(|a| a.grid[0] * a.grid[1])
            .sum();
        self.stats.peak_resident_bricks = self.stats.peak_resident_bricks.max(now);
    }

    fn flush_slab(&mut self, level: u32, kz: usize) -> Result<()> {
        let s = self.tree.brick_side();
        let acc = &mut self.accums[level as usize];
        let [dx, dy, _] = acc.dims;
        let depth = acc.planes;
        for ky in 0..acc.grid[1] {
            for kx in 0..acc.grid[0] {
                let ex = s.min(dx - kx * s);
                let ey = s.min(dy - ky * s);
                let mut voxels = Vec::with_capacity(ex * ey * depth);
                for z in 0..depth {
                    for y in 0..ey {
                        let start = kx * s + dx * (ky * s + y + dy * z);
                        voxels.extend_from_slice(&acc.slab[start..start + ex]);
                    }
                }
                let brick = Brick::new([ex, ey, depth], voxels)?;
                self.tree
                    .write_brick(NodeAddress::new(level, [kx, ky, kz]), &brick)?;
                self.stats.bricks_written += 1;
            }
        }
        acc.planes = 0;
        Ok(())
    }

    pub fn finish(self) -> Result<(OctreeVolume, BuildStats)> {
        let leaf = &self.accums[self.tree.geometry().leaf_level() as usize];
        if leaf.next_z != leaf.dims[2] {
            return Err(Error::InvalidVolume(format!(
                "received {} planes, volume has {}",
                leaf.next_z, leaf.dims[2]
            )));
        }
        self.tree.flush()?;
        Ok((self.tree, self.stats))
    }
}

/// 2³ mean of two consecutive planes (or a single trailing plane).
fn downsample_planes(first: Option<&[f32]>, second: &[f32], dims: Extent) -> Vec<f32> {
    let [dx, dy, _] = dims;
    let (px, py) = (dx.div_ceil(2), dy.div_ceil(2));
    let mut out = Vec::with_capacity(px * py);
    for y in 0..py {
        for x in 0..px {
            let mut sum = 0f64;
            let mut count = 0u32;
            for sy in 2 * y..(2 * y + 2).min(dy) {
                for sx in 2 * x..(2 * x + 2).min(dx) {
                    let i = sx + dx * sy;
                    if let Some(f) = first {
                        sum += f[i] as f64;
                        count += 1;
                    }
                    sum += second[i] as f64;
                    count += 1;
                }
            }
            out.push((sum / count as f64) as f32);
        }
    }
    out
}

/// Streams `planes` (full-resolution, z order) into `tree`.
pub fn build_octree<I>(tree: OctreeVolume, planes: I) -> Result<(OctreeVolume, BuildStats)>
where
    I: IntoIterator<Item = Result<Vec<f32>>>,
{
    let mut builder = OctreeBuilder::new(tree);
    for plane in planes {
        builder.push_plane(plane?)?;
    }
    builder.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{self, Region};
    use crate::octree::{SourceDtype, ValueKind, VolumeMeta};

    fn planes_of(dims: Extent, f: impl Fn([usize; 3]) -> f32) -> Vec<Result<Vec<f32>>> {
        (0..dims[2])
            .map(|z| {
                Ok((0..dims[1])
                    .flat_map(|y| (0..dims[0]).map(move |x| [x, y, z]))
                    .map(&f)
                    .collect())
            })
            .collect()
    }

    fn build(dims: Extent, s: usize, f: impl Fn([usize; 3]) -> f32) -> (OctreeVolume, BuildStats) {
        let meta = VolumeMeta::new(dims.map(|d| d as u64), ValueKind::Intensity, SourceDtype::F32);
        let tree = OctreeVolume::in_memory(meta, s).unwrap();
        build_octree(tree, planes_of(dims, f)).unwrap()
    }

    #[test]
    fn single_brick_volume_has_one_level() {
        let (t, _) = build([32; 3], 32, |p| (p[0] as f32) / 31.0);
        assert_eq!(t.levels(), 1);
        let b = t.read_brick(NodeAddress::ROOT).unwrap().unwrap();
        assert_eq!(b.extent(), [32; 3]);
        assert_eq!(b.get([31, 0, 0]), 1.0);
    }

    #[test]
    fn two_levels_root_is_mean_of_leaves() {
        let (t, stats) = build([64; 3], 32, |p| ((p[0] * 7 + p[1] * 3 + p[2]) % 11) as f32 / 10.0);
        assert_eq!(t.levels(), 2);
        assert_eq!(t.present_count(1), 8);
        assert_eq!(stats.bricks_written, 9);
        let root = t.read_brick(NodeAddress::ROOT).unwrap().unwrap();
        let v = |p: [usize; 3]| ((p[0] * 7 + p[1] * 3 + p[2]) % 11) as f64 / 10.0;
        for (i, p) in Region::new([0; 3], [32; 3]).positions().enumerate() {
            let mut sum = 0.0;
            for d in 0..8 {
                sum += v([2 * p[0] + (d & 1), 2 * p[1] + ((d >> 1) & 1), 2 * p[2] + (d >> 2)]);
            }
            assert!((root.voxels()[i] as f64 - sum / 8.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_volume_constant_everywhere() {
        let (t, _) = build([64; 3], 32, |_| 0.7);
        for level in 0..t.levels() {
            for i in 0..t.geometry().node_count(level) {
                let b = t.read_brick(t.geometry().address(level, i)).unwrap().unwrap();
                assert!(b.voxels().iter().all(|&v| v == 0.7));
                assert_eq!(b.stats(), (0.7, 0.7));
            }
        }
    }

    #[test]
    fn checkerboard_children_average_to_half() {
        let (t, _) = build([4; 3], 2, |p| ((p[0] + p[1] + p[2]) % 2) as f32);
        let root = t.read_brick(NodeAddress::ROOT).unwrap().unwrap();
        assert_eq!(root.extent(), [2; 3]);
        assert!(root.voxels().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn border_mean_uses_present_voxels_only() {
        // 3 voxels along x: parent voxel 1 covers only child voxel 2.
        let (t, _) = build([3, 1, 1], 2, |p| p[0] as f32 / 2.0);
        assert_eq!(t.levels(), 2);
        let root = t.read_brick(NodeAddress::ROOT).unwrap().unwrap();
        assert_eq!(root.extent(), [2, 1, 1]);
        assert_eq!(root.voxels(), &[0.25, 1.0]);
    }

    #[test]
    fn wrong_plane_count_is_an_error() {
        let meta = VolumeMeta::new([4, 4, 4], ValueKind::Intensity, SourceDtype::F32);
        let tree = OctreeVolume::in_memory(meta, 2).unwrap();
        let mut planes = planes_of([4; 3], |_| 0.0);
        planes.pop();
        assert!(build_octree(tree, planes).is_err());
    }

    #[test]
    fn streaming_residency_stays_within_one_slab_per_level() {
        for d in [64usize, 128, 256] {
            let (t, stats) = build([d; 3], 32, |p| ((p[0] ^ p[2]) & 1) as f32);
            let g = t.geometry();
            let bound: usize = (0..g.levels())
                .map(|l| g.grid_dims(l)[0] * g.grid_dims(l)[1])
                .sum();
            assert_eq!(stats.resident_bound, bound);
            assert!(stats.peak_resident_bricks <= bound);
            assert!(stats.peak_resident_bricks < g.total_nodes() || g.levels() <= 2);
            let leaf = g.leaf_level();
            assert_eq!(t.present_count(leaf), geometry::volume(g.grid_dims(leaf)));
        }
    }
}
