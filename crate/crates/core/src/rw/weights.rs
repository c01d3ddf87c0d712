//! Lattice edge weights.
//!
//! One weight is stored per undirected edge: `axis(a)[i]` couples voxel `i`
//! with its `+a` neighbor. Entries whose `+a` neighbor lies outside the extent
//! are zero and never read by the solver.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::geometry::{self, Extent};

/// Floor for weight functions that can underflow to zero.
pub const DEFAULT_MIN_WEIGHT: f64 = 1e-6;
const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    /// `exp(−β (n[p] − n[q])²)`.
    Grady { beta: f64 },
    /// Two-sided p-value that the windows around `p` and `q` share a mean.
    Ttest { radius: usize, min_weight: f64 },
    /// `exp(−(n[p] − n[q])² / 2σ̂²)` with σ̂² estimated over the brick.
    GaussianGlobal { min_weight: f64 },
    /// `exp(−½ (√n[p] − √n[q])²)`.
    PoissonSqrt,
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Ttest {
            radius: 1,
            min_weight: DEFAULT_MIN_WEIGHT,
        }
    }
}

impl WeightSpec {
    pub fn validate(&self) -> Result<()> {
        let min_ok = |m: f64| m > 0.0 && m <= 1e-2;
        let ok = match *self {
            WeightSpec::Grady { beta } => beta > 0.0 && beta.is_finite(),
            WeightSpec::Ttest { radius, min_weight } => radius >= 1 && min_ok(min_weight),
            WeightSpec::GaussianGlobal { min_weight } => min_ok(min_weight),
            WeightSpec::PoissonSqrt => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid weight spec {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeWeights {
    extent: Extent,
    axes: [Vec<f64>; 3],
}

impl EdgeWeights {
    /// Uniform unit weights, mostly for tests and analytic examples.
    pub fn uniform(extent: Extent) -> Self {
        Self::from_fn(extent, |_, _| 1.0)
    }

    /// Builds weights from `f(p, q)` evaluated once per edge with `p < q`.
    pub fn from_fn(extent: Extent, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let n = geometry::volume(extent);
        let mut axes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let strides = [1, extent[0], extent[0] * extent[1]];
        for z in 0..extent[2] {
            for y in 0..extent[1] {
                for x in 0..extent[0] {
                    let p = [x, y, z];
                    let i = geometry::linear(extent, p);
                    for a in 0..3 {
                        if p[a] + 1 < extent[a] {
                            axes[a][i] = f(i, i + strides[a]);
                        }
                    }
                }
            }
        }
        EdgeWeights { extent, axes }
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.axes[a]
    }

    /// Number of lattice edges.
    pub fn edge_count(&self) -> usize {
        let [x, y, z] = self.extent;
        (x - 1) * y * z + x * (y - 1) * z + x * y * (z - 1)
    }

    /// Weight between `p` and an adjacent voxel `q`, in either order.
    pub fn between(&self, p: [usize; 3], q: [usize; 3]) -> Option<f64> {
        let (lo, hi) = if geometry::linear(self.extent, p) < geometry::linear(self.extent, q) {
            (p, q)
        } else {
            (q, p)
        };
        let diff: Vec<usize> = (0..3).filter(|&a| lo[a] != hi[a]).collect();
        match diff[..] {
            [a] if hi[a] == lo[a] + 1 && hi[a] < self.extent[a] => {
                Some(self.axes[a][geometry::linear(self.extent, lo)])
            }
            _ => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let strides = [1, self.extent[0], self.extent[0] * self.extent[1]];
        (0..3).flat_map(move |a| {
            (0..self.axes[a].len()).filter_map(move |i| {
                let p = geometry::delinear(self.extent, i);
                (p[a] + 1 < self.extent[a]).then(|| (i, i + strides[a], self.axes[a][i]))
            })
        })
    }
}

/// Mean squared difference over all 6-neighbor pairs, floored at 1e-8.
pub fn difference_variance(voxels: &[f32], extent: Extent) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    let strides = [1, extent[0], extent[0] * extent[1]];
    for (i, p) in crate::geometry::Region::new([0; 3], extent).positions().enumerate() {
        for a in 0..3 {
            if p[a] + 1 < extent[a] {
                let d = voxels[i] as f64 - voxels[i + strides[a]] as f64;
                sum += d * d;
                count += 1;
            }
        }
    }
    if count == 0 {
        VARIANCE_FLOOR
    } else {
        (sum / count as f64).max(VARIANCE_FLOOR)
    }
}

/// Mean and floored sample variance over the clipped cubic window of every voxel.
struct WindowStats {
    count: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl WindowStats {
    fn new(voxels: &[f32], extent: Extent, radius: usize) -> Self {
        let [ex, ey, ez] = extent;
        let (sx, sy) = (ex + 1, ey + 1);
        let at = |x: usize, y: usize, z: usize| x + sx * (y + sy * z);
        let mut s1 = vec![0f64; sx * sy * (ez + 1)];
        let mut s2 = s1.clone();
        for z in 0..ez {
            for y in 0..ey {
                for x in 0..ex {
                    let v = voxels[x + ex * (y + ey * z)] as f64;
                    let (i, ix, iy, iz) = (at(x + 1, y + 1, z + 1), at(x, y + 1, z + 1), at(x + 1, y, z + 1), at(x + 1, y + 1, z));
                    let (ixy, ixz, iyz, ixyz) = (at(x, y, z + 1), at(x, y + 1, z), at(x + 1, y, z), at(x, y, z));
                    s1[i] = v + s1[ix] + s1[iy] + s1[iz] - s1[ixy] - s1[ixz] - s1[iyz] + s1[ixyz];
                    s2[i] = v * v + s2[ix] + s2[iy] + s2[iz] - s2[ixy] - s2[ixz] - s2[iyz] + s2[ixyz];
                }
            }
        }
        let box_sum = |s: &[f64], lo: [usize; 3], hi: [usize; 3]| {
            s[at(hi[0], hi[1], hi[2])] - s[at(lo[0], hi[1], hi[2])] - s[at(hi[0], lo[1], hi[2])]
                - s[at(hi[0], hi[1], lo[2])]
                + s[at(lo[0], lo[1], hi[2])]
                + s[at(lo[0], hi[1], lo[2])]
                + s[at(hi[0], lo[1], lo[2])]
                - s[at(lo[0], lo[1], lo[2])]
        };
        let n = geometry::volume(extent);
        let (mut count, mut mean, mut var) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for p in crate::geometry::Region::new([0; 3], extent).positions() {
            let lo = p.map(|c| c.saturating_sub(radius));
            let hi = [0, 1, 2].map(|a| (p[a] + radius + 1).min(extent[a]));
            let k = ((hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2])) as f64;
            let a = box_sum(&s1, lo, hi);
            let b = box_sum(&s2, lo, hi);
            let m = a / k;
            let v = if k > 1.0 { (b - a * m) / (k - 1.0) } else { 0.0 };
            count.push(k);
            mean.push(m);
            var.push(v.max(VARIANCE_FLOOR));
        }
        WindowStats { count, mean, var }
    }

    /// Two-sided Welch p-value with a normal approximation of Student's t.
    fn p_value(&self, p: usize, q: usize) -> f64 {
        let (np, nq) = (self.count[p], self.count[q]);
        let (ap, aq) = (self.var[p] / np, self.var[q] / nq);
        let se2 = ap + aq;
        let t = (self.mean[p] - self.mean[q]) / se2.sqrt();
        let df = se2 * se2 / (ap * ap / (np - 1.0).max(1.0) + aq * aq / (nq - 1.0).max(1.0));
        let z = t * (1.0 - 1.0 / (4.0 * df)) / (1.0 + t * t / (2.0 * df)).sqrt();
        erfc(z.abs() / std::f64::consts::SQRT_2)
    }
}

/// Computes one weight per lattice edge of `voxels`.
pub fn compute_weights(voxels: &[f32], extent: Extent, spec: &WeightSpec) -> EdgeWeights {
    debug_assert_eq!(voxels.len(), geometry::volume(extent));
    let v = |i: usize| voxels[i] as f64;
    match *spec {
        WeightSpec::Grady { beta } => EdgeWeights::from_fn(extent, |p, q| {
            let d = v(p) - v(q);
            (-beta * d * d).exp().max(DEFAULT_MIN_WEIGHT)
        }),
        WeightSpec::PoissonSqrt => EdgeWeights::from_fn(extent, |p, q| {
            let d = v(p).max(0.0).sqrt() - v(q).max(0.0).sqrt();
            (-0.5 * d * d).exp()
        }),
        WeightSpec::GaussianGlobal { min_weight } => {
            let s2 = difference_variance(voxels, extent);
            EdgeWeights::from_fn(extent, |p, q| {
                let d = v(p) - v(q);
                (-d * d / (2.0 * s2)).exp().max(min_weight)
            })
        }
        WeightSpec::Ttest { radius, min_weight } => {
            let stats = WindowStats::new(voxels, extent, radius);
            EdgeWeights::from_fn(extent, |p, q| stats.p_value(p, q).clamp(min_weight, 1.0))
        }
    }
}
