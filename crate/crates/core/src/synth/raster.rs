use super::primitive::Primitive;
use crate::geometry::Extent;

/// Ground-truth planes in z order, produced by a sweep over primitives sorted
/// by their lower z bound. Only primitives whose bounds reach the current
/// plane are tested; a voxel is foreground iff its center lies inside one.
pub struct GroundTruthPlanes<'a> {
    dims: Extent,
    sorted: Vec<&'a Primitive>,
    next: usize,
    active: Vec<&'a Primitive>,
    z: usize,
}

impl<'a> GroundTruthPlanes<'a> {
    pub fn new(primitives: &'a [Primitive], dims: Extent) -> Self {
        let mut sorted: Vec<&Primitive> = primitives.iter().collect();
        sorted.sort_by(|a, b| a.bounds().0[2].total_cmp(&b.bounds().0[2]));
        GroundTruthPlanes {
            dims,
            sorted,
            next: 0,
            active: Vec::new(),
            z: 0,
        }
    }
}

impl Iterator for GroundTruthPlanes<'_> {
    type Item = Vec<bool>;

    fn next(&mut self) -> Option<Vec<bool>> {
        let [dx, dy, dz] = self.dims;
        if self.z >= dz {
            return None;
        }
        let zc = self.z as f64 + 0.5;
        while self.next < self.sorted.len() && self.sorted[self.next].bounds().0[2] <= zc {
            self.active.push(self.sorted[self.next]);
            self.next += 1;
        }
        self.active.retain(|p| p.bounds().1[2] >= zc);
        let mut plane = vec![false; dx * dy];
        for p in &self.active {
            let (lo, hi) = p.bounds();
            // voxel centers inside [lo, hi]
            let first = |l: f64| (l - 0.5).ceil().max(0.0) as usize;
            let end = |h: f64, d: usize| ((h - 0.5).floor() + 1.0).clamp(0.0, d as f64) as usize;
            let (x0, x1) = (first(lo[0]), end(hi[0], dx));
            let (y0, y1) = (first(lo[1]), end(hi[1], dy));
            for y in y0..y1 {
                for x in x0..x1 {
                    let i = x + dx * y;
                    if !plane[i] && p.contains([x as f64 + 0.5, y as f64 + 0.5, zc]) {
                        plane[i] = true;
                    }
                }
            }
        }
        self.z += 1;
        Some(plane)
    }
}

/// Streams ground-truth planes to `handler(z, plane)`; returns the foreground count.
pub fn stream_rasterize(primitives: &[Primitive], dims: Extent, mut handler: impl FnMut(usize, &[bool])) -> usize {
    let mut count = 0;
    for (z, plane) in GroundTruthPlanes::new(primitives, dims).enumerate() {
        count += plane.iter().filter(|&&b| b).count();
        handler(z, &plane);
    }
    count
}

/// Foreground voxel count of the union of `primitives`.
pub fn foreground_count(primitives: &[Primitive], dims: Extent) -> usize {
    stream_rasterize(primitives, dims, |_, _| {})
}
