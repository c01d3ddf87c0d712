//! Voxel-grid index arithmetic shared by all modules.
//!
//! Arrays are row-major with x fastest: `index = x + ex * (y + ey * z)`.

use serde::{Deserialize, Serialize};

pub type Extent = [usize; 3];

#[inline]
pub fn volume(extent: Extent) -> usize {
    extent[0] * extent[1] * extent[2]
}

#[inline]
pub fn linear(extent: Extent, p: [usize; 3]) -> usize {
    p[0] + extent[0] * (p[1] + extent[1] * p[2])
}

#[inline]
pub fn delinear(extent: Extent, i: usize) -> [usize; 3] {
    let x = i % extent[0];
    let yz = i / extent[0];
    [x, yz % extent[1], yz / extent[1]]
}

/// Axis-aligned box of voxels: `origin .. origin + extent`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub origin: [usize; 3],
    pub extent: Extent,
}

impl Region {
    pub fn new(origin: [usize; 3], extent: Extent) -> Self {
        Region { origin, extent }
    }

    pub fn from_bounds(lo: [usize; 3], hi: [usize; 3]) -> Self {
        Region {
            origin: lo,
            extent: [
                hi[0].saturating_sub(lo[0]),
                hi[1].saturating_sub(lo[1]),
                hi[2].saturating_sub(lo[2]),
            ],
        }
    }

    pub fn hi(&self) -> [usize; 3] {
        [
            self.origin[0] + self.extent[0],
            self.origin[1] + self.extent[1],
            self.origin[2] + self.extent[2],
        ]
    }

    pub fn volume(&self) -> usize {
        volume(self.extent)
    }

    pub fn is_empty(&self) -> bool {
        self.volume() == 0
    }

    pub fn intersect(&self, other: &Region) -> Region {
        let (a, b) = (self.hi(), other.hi());
        let lo = [
            self.origin[0].max(other.origin[0]),
            self.origin[1].max(other.origin[1]),
            self.origin[2].max(other.origin[2]),
        ];
        let hi = [a[0].min(b[0]), a[1].min(b[1]), a[2].min(b[2])];
        Region::from_bounds(lo, hi)
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        let hi = self.hi();
        (0..3).all(|a| p[a] >= self.origin[a] && p[a] < hi[a])
    }

    pub fn contains_region(&self, other: &Region) -> bool {
        let (a, b) = (self.hi(), other.hi());
        (0..3).all(|i| other.origin[i] >= self.origin[i] && b[i] <= a[i])
    }

    /// Iterates global voxel positions in x-fastest order.
    pub fn positions(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [ox, oy, oz] = self.origin;
        let [ex, ey, ez] = self.extent;
        (0..ez).flat_map(move |z| {
            (0..ey).flat_map(move |y| (0..ex).map(move |x| [ox + x, oy + y, oz + z]))
        })
    }
}

/// Copies `sub` (a box inside both regions) from `src` laid out over `src_region`
/// into `dst` laid out over `dst_region`.
pub fn copy_box(
    src: &[f32],
    src_region: &Region,
    dst: &mut [f32],
    dst_region: &Region,
    sub: &Region,
) {
    if sub.is_empty() {
        return;
    }
    let row = sub.extent[0];
    for z in 0..sub.extent[2] {
        for y in 0..sub.extent[1] {
            let g = [sub.origin[0], sub.origin[1] + y, sub.origin[2] + z];
            let s = linear(
                src_region.extent,
                [
                    g[0] - src_region.origin[0],
                    g[1] - src_region.origin[1],
                    g[2] - src_region.origin[2],
                ],
            );
            let d = linear(
                dst_region.extent,
                [
                    g[0] - dst_region.origin[0],
                    g[1] - dst_region.origin[1],
                    g[2] - dst_region.origin[2],
                ],
            );
            dst[d..d + row].copy_from_slice(&src[s..s + row]);
        }
    }
}

/// Trilinear sample of a scalar field at a continuous position given in voxel
/// index units (voxel `i` has its center at `i`). Positions outside the grid
/// are clamped to the edge voxels.
pub fn trilinear(field: &[f32], extent: Extent, pos: [f64; 3]) -> f64 {
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    let mut t = [0f64; 3];
    for a in 0..3 {
        let max = (extent[a] - 1) as f64;
        let p = pos[a].clamp(0.0, max);
        let f = p.floor();
        lo[a] = f as usize;
        hi[a] = (lo[a] + 1).min(extent[a] - 1);
        t[a] = p - f;
    }
    let at = |x: usize, y: usize, z: usize| field[linear(extent, [x, y, z])] as f64;
    let c00 = at(lo[0], lo[1], lo[2]) * (1.0 - t[0]) + at(hi[0], lo[1], lo[2]) * t[0];
    let c10 = at(lo[0], hi[1], lo[2]) * (1.0 - t[0]) + at(hi[0], hi[1], lo[2]) * t[0];
    let c01 = at(lo[0], lo[1], hi[2]) * (1.0 - t[0]) + at(hi[0], lo[1], hi[2]) * t[0];
    let c11 = at(lo[0], hi[1], hi[2]) * (1.0 - t[0]) + at(hi[0], hi[1], hi[2]) * t[0];
    let c0 = c00 * (1.0 - t[1]) + c10 * t[1];
    let c1 = c01 * (1.0 - t[1]) + c11 * t[1];
    c0 * (1.0 - t[2]) + c1 * t[2]
}

/// Position of the center of fine voxel `g` in the index space of a grid
/// `levels_up` levels coarser (each level halves the resolution).
#[inline]
pub fn coarse_position(g: usize, levels_up: u32) -> f64 {
    let scale = (1u64 << levels_up) as f64;
    (g as f64 + 0.5) / scale - 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_roundtrip() {
        let e = [3, 4, 5];
        for i in 0..volume(e) {
            assert_eq!(linear(e, delinear(e, i)), i);
        }
    }

    #[test]
    fn region_intersection_and_positions() {
        let a = Region::new([0, 0, 0], [4, 4, 4]);
        let b = Region::new([2, 3, 1], [4, 4, 4]);
        let c = a.intersect(&b);
        assert_eq!(c, Region::new([2, 3, 1], [2, 1, 3]));
        assert_eq!(c.positions().count(), 6);
        assert_eq!(c.positions().next(), Some([2, 3, 1]));
        let d = Region::new([10, 0, 0], [1, 1, 1]);
        assert!(a.intersect(&d).is_empty());
    }

    #[test]
    fn trilinear_reproduces_linear_field() {
        let e = [4, 3, 2];
        let field: Vec<f32> = (0..volume(e))
            .map(|i| {
                let [x, y, z] = delinear(e, i);
                (0.1 * x as f64 + 0.05 * y as f64 + 0.2 * z as f64) as f32
            })
            .collect();
        let v = trilinear(&field, e, [1.25, 0.5, 0.75]);
        assert!((v - (0.125 + 0.025 + 0.15)).abs() < 1e-6);
    }

    #[test]
    fn coarse_position_maps_voxel_centers() {
        assert_eq!(coarse_position(0, 1), -0.25);
        assert_eq!(coarse_position(1, 1), 0.25);
        assert_eq!(coarse_position(3, 2), 0.375);
    }
}
