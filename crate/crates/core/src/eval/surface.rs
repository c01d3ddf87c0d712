use crate::geometry::Extent;
use crate::synth::Primitive;

/// Cells of the `n³` subdivision of the box `[0, domain)` that the surface
/// `sdf = 0` passes through.
///
/// A cell counts when `sdf` changes sign over a 3³ lattice of its corners,
/// edge midpoints, face centers and center.
pub fn surface_bricks_analytic(sdf: impl Fn([f64; 3]) -> f64, domain: [f64; 3], n: usize) -> usize {
    assert!(n >= 1);
    let h = domain.map(|d| d / n as f64);
    let mut count = 0;
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let (mut neg, mut pos) = (false, false);
                for c in 0..27 {
                    let t = [c % 3, c / 3 % 3, c / 9].map(|o| o as f64 / 2.0);
                    let p = [(i as f64 + t[0]) * h[0], (j as f64 + t[1]) * h[1], (k as f64 + t[2]) * h[2]];
                    let v = sdf(p);
                    neg |= v <= 0.0;
                    pos |= v > 0.0;
                }
                count += (neg && pos) as usize;
            }
        }
    }
    count
}

/// Surface cells of a primitive union over a volume of `dims` voxels.
pub fn surface_bricks_primitives(prims: &[Primitive], dims: Extent, n: usize) -> usize {
    let sdf = |p: [f64; 3]| prims.iter().map(|q| q.distance(p)).fold(f64::INFINITY, f64::min);
    surface_bricks_analytic(sdf, dims.map(|d| d as f64), n)
}

/// Cells of the `n³` subdivision of a voxel mask that hold both foreground and background.
pub fn surface_bricks_mask<I>(planes: I, dims: Extent, n: usize) -> usize
where
    I: IntoIterator<Item = Vec<bool>>,
{
    assert!(n >= 1);
    let cell = |v: usize, d: usize| v * n / d;
    // bit 0: background seen, bit 1: foreground seen
    let mut seen = vec![0u8; n * n * n];
    for (z, plane) in planes.into_iter().enumerate() {
        let cz = cell(z, dims[2]);
        for y in 0..dims[1] {
            let cy = cell(y, dims[1]);
            for x in 0..dims[0] {
                let i = cell(x, dims[0]) + n * (cy + n * cz);
                seen[i] |= 1 << plane[x + dims[0] * y] as u8;
            }
        }
    }
    seen.iter().filter(|&&s| s == 3).count()
}
