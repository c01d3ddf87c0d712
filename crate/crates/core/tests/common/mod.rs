//! Independent reference implementations shared by the integration tests.

#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

use hrw_core::geometry::{Extent, Region};
use hrw_core::octree::{build_octree, OctreeVolume, SourceDtype, ValueKind, VolumeMeta};
use hrw_core::rw::{EdgeWeights, SeedMap};
use hrw_core::synth::Primitive;

/// Dirichlet problem solved by assembling the dense Laplacian and running
/// Gaussian elimination with partial pivoting on the unseeded block.
pub fn dense_dirichlet(weights: &EdgeWeights, seeds: &SeedMap) -> Vec<f64> {
    let e = weights.extent();
    let n = e[0] * e[1] * e[2];
    let mut lap = vec![vec![0.0f64; n]; n];
    for (i, j, w) in weights.iter() {
        lap[i][j] -= w;
        lap[j][i] -= w;
        lap[i][i] += w;
        lap[j][j] += w;
    }
    let fixed: Vec<Option<f64>> = (0..n).map(|i| seeds.get(i)).collect();
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let m = free.len();
    let mut a = vec![vec![0.0; m + 1]; m];
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            a[r][c] = lap[i][j];
        }
        a[r][m] = -(0..n).filter_map(|j| fixed[j].map(|v| lap[i][j] * v)).sum::<f64>();
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, piv);
        for r in col + 1..m {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..=m {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|c| a[r][c] * x[c]).sum();
        x[r] = (a[r][m] - s) / a[r][r];
    }
    let mut out: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    for (r, &i) in free.iter().enumerate() {
        out[i] = x[r];
    }
    out
}

/// Parameter interval over which `a + t(b − a)`, `t ∈ [0, 1]`, lies in the box `[lo, hi]`.
pub fn segment_box(a: [f64; 3], b: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..3 {
        let d = b[k] - a[k];
        if d.abs() < 1e-300 {
            if a[k] < lo[k] || a[k] > hi[k] {
                return None;
            }
        } else {
            let (u, v) = ((lo[k] - a[k]) / d, (hi[k] - a[k]) / d);
            t0 = t0.max(u.min(v));
            t1 = t1.min(u.max(v));
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Voxels whose interior the segment crosses for a positive length (must be
/// seeded) and voxels whose closed box it touches (may be seeded).
pub fn segment_voxels(a: [f64; 3], b: [f64; 3], extent: Extent) -> (Vec<[usize; 3]>, Vec<[usize; 3]>) {
    let (mut must, mut may) = (Vec::new(), Vec::new());
    let len = (0..3).map(|k| (b[k] - a[k]).powi(2)).sum::<f64>().sqrt();
    for v in Region::new([0; 3], extent).positions() {
        let lo = v.map(|c| c as f64);
        let hi = v.map(|c| c as f64 + 1.0);
        if segment_box(a, b, lo, hi).is_some() {
            may.push(v);
        }
        let shrink = 1e-6;
        if let Some((t0, t1)) = segment_box(a, b, lo.map(|c| c + shrink), hi.map(|c| c - shrink)) {
            if (t1 - t0) * len > 1e-6 {
                must.push(v);
            }
        }
    }
    (must, may)
}

/// Foreground mask by testing every voxel center against every primitive.
pub fn brute_force_mask(prims: &[Primitive], dims: Extent) -> Vec<bool> {
    Region::new([0; 3], dims)
        .positions()
        .map(|p| {
            let c = p.map(|v| v as f64 + 0.5);
            prims.iter().any(|q| q.contains(c))
        })
        .collect()
}

pub fn volume_from_fn(dims: Extent, s: usize, f: impl Fn([usize; 3]) -> f32) -> OctreeVolume {
    let meta = VolumeMeta::new(dims.map(|d| d as u64), ValueKind::Intensity, SourceDtype::F32);
    let planes = (0..dims[2]).map(|z| Ok(Region::new([0, 0, z], [dims[0], dims[1], 1]).positions().map(&f).collect()));
    build_octree(OctreeVolume::in_memory(meta, s).unwrap(), planes).unwrap().0
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).abs()).fold(0.0, f64::max)
}
