//! Seed rasterization into brick-local voxel grids.

use std::collections::{BTreeMap, BTreeSet};

use crate::geometry::{self, Extent};

/// Seed values closer than this are considered equal.
pub const SEED_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum LocalGeometry {
    Point([f64; 3]),
    Polyline(Vec<[f64; 3]>),
}

/// A label in brick-local continuous voxel coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalLabel {
    pub geometry: LocalGeometry,
    pub value: f64,
    /// Added since the previous computation; conflicts involving it are tracked.
    pub fresh: bool,
}

impl LocalLabel {
    pub fn point(p: [f64; 3], value: f64) -> Self {
        LocalLabel {
            geometry: LocalGeometry::Point(p),
            value,
            fresh: false,
        }
    }

    pub fn polyline(vertices: Vec<[f64; 3]>, value: f64) -> Self {
        LocalLabel {
            geometry: LocalGeometry::Polyline(vertices),
            value,
            fresh: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Entry {
    value: f64,
    fresh: bool,
}

/// Seeded voxels of one brick or neighborhood.
///
/// Entries and conflicts are disjoint: a voxel that received two differing
/// values is left unseeded.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeedMap {
    extent: Extent,
    entries: BTreeMap<usize, Entry>,
    conflicts: BTreeSet<usize>,
    fresh_conflicts: BTreeSet<usize>,
}

impl SeedMap {
    pub fn new(extent: Extent) -> Self {
        SeedMap {
            extent,
            ..Default::default()
        }
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    /// Records a user seed, turning the voxel into a conflict on disagreement.
    pub fn insert(&mut self, index: usize, value: f64, fresh: bool) {
        debug_assert!(index < geometry::volume(self.extent));
        if self.conflicts.contains(&index) {
            if fresh {
                self.fresh_conflicts.insert(index);
            }
            return;
        }
        match self.entries.get_mut(&index) {
            None => {
                self.entries.insert(index, Entry { value, fresh });
            }
            Some(e) if (e.value - value).abs() <= SEED_TOLERANCE => e.fresh |= fresh,
            Some(e) => {
                if fresh || e.fresh {
                    self.fresh_conflicts.insert(index);
                }
                self.entries.remove(&index);
                self.conflicts.insert(index);
            }
        }
    }

    /// Adds a continuous boundary seed unless the voxel is already seeded or conflicting.
    pub fn insert_boundary(&mut self, index: usize, value: f64) {
        if !self.conflicts.contains(&index) {
            self.entries.entry(index).or_insert(Entry { value, fresh: false });
        }
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.entries.get(&index).map(|e| e.value)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().map(|(&i, e)| (i, e.value))
    }

    pub fn conflicts(&self) -> &BTreeSet<usize> {
        &self.conflicts
    }

    /// Conflicts in which at least one fresh label is involved.
    pub fn fresh_conflicts(&self) -> &BTreeSet<usize> {
        &self.fresh_conflicts
    }

    /// Dense per-voxel seed values.
    pub fn dense(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; geometry::volume(self.extent)];
        for (i, v) in self.iter() {
            out[i] = Some(v);
        }
        out
    }
}

/// Rasterizes labels: points land in the voxel containing them, polyline
/// segments mark every voxel they pass through. Geometry outside the extent
/// is ignored.
pub fn rasterize_labels(labels: &[LocalLabel], extent: Extent) -> SeedMap {
    let mut map = SeedMap::new(extent);
    for label in labels {
        let mut put = |v: [usize; 3]| map.insert(geometry::linear(extent, v), label.value, label.fresh);
        match &label.geometry {
            LocalGeometry::Point(p) => {
                if let Some(v) = voxel_of(*p, extent) {
                    put(v);
                }
            }
            LocalGeometry::Polyline(vs) => {
                let mut seen = BTreeSet::new();
                for w in vs.windows(2) {
                    traverse_segment(w[0], w[1], extent, |v| {
                        if seen.insert(v) {
                            put(v);
                        }
                    });
                }
                if vs.len() == 1 {
                    if let Some(v) = voxel_of(vs[0], extent) {
                        put(v);
                    }
                }
            }
        }
    }
    map
}

fn voxel_of(p: [f64; 3], extent: Extent) -> Option<[usize; 3]> {
    let mut v = [0; 3];
    for a in 0..3 {
        let f = p[a].floor();
        if !(f >= 0.0 && f < extent[a] as f64) {
            return None;
        }
        v[a] = f as usize;
    }
    Some(v)
}

/// Clips the segment `a → b` to the box `[0, extent]` and returns the
/// parameter interval that remains.
fn clip(a: [f64; 3], b: [f64; 3], extent: Extent) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0f64, 1f64);
    for ax in 0..3 {
        let d = b[ax] - a[ax];
        let hi = extent[ax] as f64;
        if d == 0.0 {
            if a[ax] < 0.0 || a[ax] >= hi {
                return None;
            }
            continue;
        }
        let (mut lo_t, mut hi_t) = ((0.0 - a[ax]) / d, (hi - a[ax]) / d);
        if lo_t > hi_t {
            std::mem::swap(&mut lo_t, &mut hi_t);
        }
        t0 = t0.max(lo_t);
        t1 = t1.min(hi_t);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Visits every voxel a segment passes through, in order.
pub(crate) fn traverse_segment(a: [f64; 3], b: [f64; 3], extent: Extent, mut visit: impl FnMut([usize; 3])) {
    if a.iter().chain(&b).any(|c| !c.is_finite()) || extent.contains(&0) {
        return;
    }
    let Some((t0, t1)) = clip(a, b, extent) else {
        return;
    };
    let d = [0, 1, 2].map(|i| b[i] - a[i]);
    let start = [0, 1, 2].map(|i| a[i] + t0 * d[i]);
    let end = [0, 1, 2].map(|i| a[i] + t1 * d[i]);
    let cell = |p: [f64; 3]| [0, 1, 2].map(|i| (p[i].floor().max(0.0) as usize).min(extent[i] - 1));
    let mut v = cell(start);
    let last = cell(end);
    let dir = [0, 1, 2].map(|i| end[i] - start[i]);
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    let mut step = [0i64; 3];
    for i in 0..3 {
        if dir[i] > 0.0 {
            step[i] = 1;
            t_delta[i] = 1.0 / dir[i];
            t_max[i] = (v[i] as f64 + 1.0 - start[i]) / dir[i];
        } else if dir[i] < 0.0 {
            step[i] = -1;
            t_delta[i] = -1.0 / dir[i];
            t_max[i] = (v[i] as f64 - start[i]) / dir[i];
        }
    }
    visit(v);
    let budget: usize = (0..3).map(|i| v[i].abs_diff(last[i])).sum::<usize>() + 3;
    for _ in 0..budget {
        if v == last {
            break;
        }
        let i = (0..3).min_by(|&x, &y| t_max[x].total_cmp(&t_max[y])).unwrap();
        if t_max[i] > 1.0 {
            break;
        }
        let next = v[i] as i64 + step[i];
        if next < 0 || next >= extent[i] as i64 {
            break;
        }
        v[i] = next as usize;
        t_max[i] += t_delta[i];
        visit(v);
    }
}
