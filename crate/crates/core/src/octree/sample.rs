//! Neighborhood expansion, contraction and coarse-to-fine resampling.

use std::sync::Arc;

use super::{Brick, NodeAddress, OctreeVolume, Residency, TreeGeometry, Tracked};
use crate::error::{Error, Result};
use crate::geometry::{coarse_position, copy_box, trilinear, Extent, Region};

/// A brick grown into its same-level neighbors, clipped at the volume border.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhood {
    pub center: NodeAddress,
    /// Expanded region in level-local voxel coordinates.
    pub region: Region,
    /// The center brick's region in the same coordinates.
    pub center_region: Region,
    pub voxels: Vec<f32>,
}

impl Neighborhood {
    pub fn extent(&self) -> Extent {
        self.region.extent
    }

    /// Position of the center brick inside the neighborhood.
    pub fn center_offset(&self) -> [usize; 3] {
        [
            self.center_region.origin[0] - self.region.origin[0],
            self.center_region.origin[1] - self.region.origin[1],
            self.center_region.origin[2] - self.region.origin[2],
        ]
    }
}

/// `⌊e·s⌋`, validated to lie in `(s, 2s]`.
pub fn expanded_side(brick_side: usize, e: f64) -> Result<usize> {
    if !(e > 1.0 && e <= 2.0) {
        return Err(Error::InvalidArgument(format!(
            "expansion factor must lie in (1, 2], got {e}"
        )));
    }
    let se = (e * brick_side as f64).floor() as usize;
    if se <= brick_side {
        return Err(Error::InvalidArgument(format!(
            "expansion {e} adds no voxels to bricks of side {brick_side}"
        )));
    }
    Ok(se)
}

/// Expanded region of `addr`: the brick plus `⌈(s_e − s)/2⌉` voxels on the low
/// side and `⌊(s_e − s)/2⌋` on the high side, clipped to the level.
pub fn neighborhood_region(geometry: &TreeGeometry, addr: NodeAddress, e: f64) -> Result<Region> {
    geometry.check(addr)?;
    let s = geometry.brick_side();
    let total = expanded_side(s, e)? - s;
    let (lo_margin, hi_margin) = (total - total / 2, total / 2);
    let brick = geometry.brick_region(addr);
    let dims = geometry.level_dims(addr.level);
    let bhi = brick.hi();
    let lo = brick.origin.map(|o| o.saturating_sub(lo_margin));
    let hi = [
        (bhi[0] + hi_margin).min(dims[0]),
        (bhi[1] + hi_margin).min(dims[1]),
        (bhi[2] + hi_margin).min(dims[2]),
    ];
    Ok(Region::from_bounds(lo, hi))
}

fn assemble(
    tree: &OctreeVolume,
    addr: NodeAddress,
    e: f64,
    mut read: impl FnMut(NodeAddress) -> Result<Option<Vec<f32>>>,
) -> Result<Neighborhood> {
    let g = tree.geometry();
    let region = neighborhood_region(g, addr, e)?;
    if !tree.contains(addr)? {
        return Err(Error::MissingNeighbors {
            center: addr,
            missing: vec![addr],
        });
    }
    let mut voxels = vec![0f32; region.volume()];
    let mut missing = Vec::new();
    for b in g.bricks_overlapping(addr.level, &region) {
        let br = g.brick_region(b);
        match read(b)? {
            Some(v) => copy_box(&v, &br, &mut voxels, &region, &br.intersect(&region)),
            None => missing.push(b),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingNeighbors {
            center: addr,
            missing,
        });
    }
    Ok(Neighborhood {
        center: addr,
        region,
        center_region: g.brick_region(addr),
        voxels,
    })
}

/// Assembles the expanded neighborhood of `addr` from same-level bricks.
///
/// Fails with [`Error::MissingNeighbors`] listing every absent brick the
/// neighborhood would need.
pub fn sample_neighborhood(tree: &OctreeVolume, addr: NodeAddress, e: f64) -> Result<Neighborhood> {
    assemble(tree, addr, e, |b| Ok(tree.read_brick(b)?.map(Brick::into_voxels)))
}

/// Same as [`sample_neighborhood`], holding at most one source brick at a time
/// and counting the assembled neighborhood as resident while it lives.
pub fn sample_neighborhood_tracked(
    tree: &OctreeVolume,
    addr: NodeAddress,
    e: f64,
    residency: &Arc<Residency>,
) -> Result<Tracked<Neighborhood>> {
    let token = residency.acquire_neighborhood(neighborhood_region(tree.geometry(), addr, e)?.volume());
    let nb = assemble(tree, addr, e, |b| {
        let brick = tree.read_brick_tracked(b, residency)?;
        Ok(brick.map(|t| t.voxels().to_vec()))
    })?;
    Ok(Tracked::new(nb, token))
}

/// Cuts the center brick out of a result computed over the neighborhood.
pub fn contract(nb: &Neighborhood, result: &[f32]) -> Result<Brick> {
    if result.len() != nb.region.volume() {
        return Err(Error::InvalidArgument(format!(
            "result has {} voxels, neighborhood {:?} has {}",
            result.len(),
            nb.extent(),
            nb.region.volume()
        )));
    }
    let mut out = vec![0f32; nb.center_region.volume()];
    copy_box(result, &nb.region, &mut out, &nb.center_region, &nb.center_region);
    Brick::new(nb.center_region.extent, out)
}

/// Trilinear resampling of a coarser brick onto a finer region.
///
/// `target` is given in voxel coordinates of `target_level`, which must be
/// deeper than `source_addr`. Samples are taken at voxel centers and clamped
/// to the edge voxels of the source brick.
pub fn upsample_region(
    geometry: &TreeGeometry,
    source: &Brick,
    source_addr: NodeAddress,
    target_level: u32,
    target: &Region,
) -> Result<Vec<f32>> {
    geometry.check(source_addr)?;
    if target_level <= source_addr.level || target_level >= geometry.levels() {
        return Err(Error::InvalidArgument(format!(
            "cannot upsample {source_addr} to level {target_level}"
        )));
    }
    let up = target_level - source_addr.level;
    let src = geometry.brick_region(source_addr);
    let hi = target.hi();
    let shift = up as usize;
    let covered = (0..3).all(|a| {
        target.extent[a] > 0
            && (target.origin[a] >> shift) >= src.origin[a]
            && ((hi[a] - 1) >> shift) < src.hi()[a]
    });
    if !covered {
        return Err(Error::Coverage {
            addr: source_addr,
            level: target_level,
        });
    }
    Ok(target
        .positions()
        .map(|g| {
            let pos = [0, 1, 2].map(|a| coarse_position(g[a], up) - src.origin[a] as f64);
            trilinear(source.voxels(), source.extent(), pos) as f32
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::octree::{build_octree, SourceDtype, ValueKind, VolumeMeta};

    fn tree(dims: Extent, s: usize, f: impl Fn([usize; 3]) -> f32) -> OctreeVolume {
        let meta = VolumeMeta::new(dims.map(|d| d as u64), ValueKind::Intensity, SourceDtype::F32);
        let t = OctreeVolume::in_memory(meta, s).unwrap();
        let planes = (0..dims[2]).map(|z| {
            Ok(Region::new([0, 0, z], [dims[0], dims[1], 1]).positions().map(&f).collect())
        });
        build_octree(t, planes).unwrap().0
    }

    #[test]
    fn expansion_factor_bounds() {
        assert!(expanded_side(32, 1.0).is_err());
        assert!(expanded_side(32, 2.5).is_err());
        assert_eq!(expanded_side(32, 1.25).unwrap(), 40);
        assert_eq!(expanded_side(32, 2.0).unwrap(), 64);
        assert_eq!(expanded_side(4, 1.5).unwrap(), 6);
    }

    #[test]
    fn single_brick_neighborhood_is_the_brick() {
        let t = tree([32; 3], 32, |p| p[0] as f32 / 32.0);
        let nb = sample_neighborhood(&t, NodeAddress::ROOT, 1.25).unwrap();
        assert_eq!(nb.extent(), [32; 3]);
        assert_eq!(nb.center_offset(), [0; 3]);
        let b = t.read_brick(NodeAddress::ROOT).unwrap().unwrap();
        assert_eq!(nb.voxels, b.voxels());
        assert_eq!(contract(&nb, &nb.voxels).unwrap(), b);
    }

    #[test]
    fn interior_node_gets_four_voxel_margin() {
        let t = tree([128; 3], 32, |p| ((p[0] + 3 * p[1] + 7 * p[2]) % 13) as f32 / 12.0);
        let addr = NodeAddress::new(2, [1, 2, 1]);
        let nb = sample_neighborhood(&t, addr, 1.25).unwrap();
        assert_eq!(nb.extent(), [40; 3]);
        assert_eq!(nb.region.origin, [28, 60, 28]);
        assert_eq!(nb.center_offset(), [4; 3]);
        for (i, g) in nb.region.positions().enumerate() {
            let expect = ((g[0] + 3 * g[1] + 7 * g[2]) % 13) as f32 / 12.0;
            assert_eq!(nb.voxels[i], expect);
        }
    }

    #[test]
    fn border_node_is_clipped() {
        let t = tree([64; 3], 32, |_| 0.5);
        let nb = sample_neighborhood(&t, NodeAddress::new(1, [0, 0, 1]), 1.25).unwrap();
        assert_eq!(nb.region, Region::new([0, 0, 28], [36, 36, 36]));
        assert_eq!(nb.center_offset(), [0, 0, 4]);
    }

    #[test]
    fn odd_margin_goes_to_low_side() {
        let g = TreeGeometry::new([64; 3], 8).unwrap();
        // s_e = 11: margin 3 = 2 low + 1 high
        let r = neighborhood_region(&g, NodeAddress::new(3, [2, 2, 2]), 1.4).unwrap();
        assert_eq!(r, Region::new([14, 14, 14], [11, 11, 11]));
    }

    #[test]
    fn missing_neighbors_are_listed() {
        let meta = VolumeMeta::new([64; 3], ValueKind::Probability, SourceDtype::F32);
        let t = OctreeVolume::in_memory(meta, 32).unwrap();
        let a = NodeAddress::new(1, [0, 0, 0]);
        t.write_brick(a, &Brick::constant([32; 3], 0.2)).unwrap();
        t.write_brick(NodeAddress::new(1, [1, 0, 0]), &Brick::constant([32; 3], 0.2)).unwrap();
        match sample_neighborhood(&t, a, 1.25) {
            Err(Error::MissingNeighbors { center, missing }) => {
                assert_eq!(center, a);
                assert_eq!(missing.len(), 6);
                assert!(!missing.contains(&NodeAddress::new(1, [1, 0, 0])));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn contract_slices_center_by_index_arithmetic() {
        // s = 4, s_e = 6: neighborhood 6³ with the center at offset 1.
        let t = tree([16; 3], 4, |_| 0.0);
        let addr = NodeAddress::new(2, [1, 1, 1]);
        let nb = sample_neighborhood(&t, addr, 1.5).unwrap();
        assert_eq!(nb.extent(), [6; 3]);
        let result: Vec<f32> = (0..216).map(|i| i as f32).collect();
        let b = contract(&nb, &result).unwrap();
        assert_eq!(b.extent(), [4; 3]);
        for z in 0..4 {
            for y in 0..4 {
                for x in 0..4 {
                    let expect = ((x + 1) + 6 * ((y + 1) + 6 * (z + 1))) as f32;
                    assert_eq!(b.get([x, y, z]), expect);
                }
            }
        }
        assert_eq!(b.stats(), (43.0, 172.0));
        assert!(contract(&nb, &result[..100]).is_err());
    }

    #[test]
    fn constant_result_contracts_to_constant_brick() {
        let t = tree([64; 3], 32, |_| 0.0);
        let nb = sample_neighborhood(&t, NodeAddress::new(1, [1, 1, 0]), 1.25).unwrap();
        let b = contract(&nb, &vec![0.3; nb.region.volume()]).unwrap();
        assert_eq!(b.stats(), (0.3, 0.3));
    }

    #[test]
    fn upsample_constant_and_ramp() {
        let g = TreeGeometry::new([8; 3], 4).unwrap();
        let c = Brick::constant([4; 3], 0.9);
        let out = upsample_region(&g, &c, NodeAddress::ROOT, 1, &Region::new([0; 3], [4; 3])).unwrap();
        assert!(out.iter().all(|&v| (v - 0.9).abs() < 1e-7));

        let ramp = Brick::new(
            [4; 3],
            Region::new([0; 3], [4; 3]).positions().map(|p| p[0] as f32 / 3.0).collect(),
        )
        .unwrap();
        // Interior child voxels reproduce the ramp: x_child center maps to (x + 0.5)/2 - 0.5.
        let out = upsample_region(&g, &ramp, NodeAddress::ROOT, 1, &Region::new([1, 0, 0], [6, 1, 1])).unwrap();
        for (i, v) in out.iter().enumerate() {
            let x = (i + 1) as f64;
            let expect = ((x + 0.5) / 2.0 - 0.5) / 3.0;
            assert!((*v as f64 - expect).abs() < 1e-6);
        }
        // Edge voxels clamp.
        let edge = upsample_region(&g, &ramp, NodeAddress::ROOT, 1, &Region::new([0, 0, 0], [1, 1, 1])).unwrap();
        assert_eq!(edge[0], 0.0);
        let bad = upsample_region(&g, &ramp, NodeAddress::new(1, [1, 0, 0]), 1, &Region::new([0; 3], [1; 3]));
        assert!(bad.is_err());
    }

    #[test]
    fn upsample_single_corner_matches_hand_trilinear() {
        // 2³ source with a one at (1,1,1), target = its 4³ children (2× upsample).
        let g = TreeGeometry::new([4; 3], 2).unwrap();
        let mut v = vec![0f32; 8];
        v[7] = 1.0;
        let src = Brick::new([2; 3], v).unwrap();
        let out = upsample_region(&g, &src, NodeAddress::ROOT, 1, &Region::new([0; 3], [4; 3])).unwrap();
        // Hand evaluation: child voxel c maps to u = (c + 0.5)/2 - 0.5 ∈ {-0.25, 0.25, 0.75, 1.25},
        // clamped to [0, 1]; weight of the corner is the product of per-axis fractions.
        let frac = [0.0, 0.25, 0.75, 1.0];
        for z in 0..4 {
            for y in 0..4 {
                for x in 0..4 {
                    let expect = frac[x] * frac[y] * frac[z];
                    let got = out[x + 4 * (y + 4 * z)] as f64;
                    assert!((got - expect).abs() < 1e-7, "{x},{y},{z}: {got} vs {expect}");
                }
            }
        }
    }

    #[test]
    fn tracked_sampling_holds_one_brick_at_a_time() {
        let t = tree([128; 3], 32, |_| 0.1);
        let res = Residency::new();
        let nb = sample_neighborhood_tracked(&t, NodeAddress::new(2, [1, 1, 1]), 1.25, &res).unwrap();
        assert_eq!(nb.extent(), [40; 3]);
        assert_eq!(res.peak_bricks(), 1);
        assert_eq!(res.resident_neighborhoods(), 1);
        assert_eq!(res.peak_voxels(), 40usize.pow(3) + 32usize.pow(3));
        drop(nb);
        assert_eq!(res.resident_neighborhoods(), 0);
    }

    #[test]
    fn untouched_result_contracts_to_original_center() {
        let t = tree([96, 64, 64], 32, |p| ((p[0] * p[1] + p[2]) % 17) as f32 / 16.0);
        let g = *t.geometry();
        for i in 0..g.node_count(g.leaf_level()) {
            let addr = g.address(g.leaf_level(), i);
            let nb = sample_neighborhood(&t, addr, 1.25).unwrap();
            let b = contract(&nb, &nb.voxels).unwrap();
            assert_eq!(b, t.read_brick(addr).unwrap().unwrap());
        }
    }
}
