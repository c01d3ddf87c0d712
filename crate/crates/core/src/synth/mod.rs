//! Deterministic synthetic phantoms: ground truth, noisy intensities and seeds.
//!
//! Everything is a pure function of [`SynthConfig`]. Volumes are produced
//! plane by plane, so no generator ever holds more than one plane plus the
//! primitive list.

mod noise;
mod primitive;
mod raster;

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{Label, LabelSet};
use crate::error::{Error, Result};
use crate::geometry::Extent;
use crate::octree::{build_octree, BuildStats, OctreeVolume, SourceDtype, ValueKind, VolumeMeta};

pub use noise::{noisy_plane, overlap_coefficient};
pub use primitive::Primitive;
pub use raster::{foreground_count, stream_rasterize, GroundTruthPlanes};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Non-overlapping-center spheres.
    Cells,
    /// Binary vessel trees entering from the volume border.
    Vessels,
    /// One centered sphere of radius `min(dims) / 4`; ignores `structure_size` and `fg_fraction`.
    Sphere,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub scenario: Scenario,
    pub dims: Extent,
    /// Upper bound of the structure diameter as a fraction of the smallest side; the lower bound is half.
    pub structure_size: f64,
    pub fg_fraction: f64,
    pub noise_sigma: f64,
    pub bg_mean: f64,
    pub fg_mean: f64,
    pub rng_seed: u64,
    /// Vessels: place seeds along every segment rather than only the root segment of each tree.
    pub seeds_per_segment: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            scenario: Scenario::Cells,
            dims: [128; 3],
            structure_size: 0.1,
            fg_fraction: 0.01,
            noise_sigma: 0.03,
            bg_mean: 0.3,
            fg_mean: 0.7,
            rng_seed: 0,
            seeds_per_segment: false,
        }
    }
}

impl SynthConfig {
    pub fn new(scenario: Scenario, dims: Extent, noise_sigma: f64, rng_seed: u64) -> Self {
        SynthConfig {
            scenario,
            dims,
            noise_sigma,
            rng_seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 16) {
            return Err(Error::InvalidArgument(format!("dims {:?} below 16³", self.dims)));
        }
        if !(self.structure_size > 0.0 && self.structure_size <= 0.5) {
            return Err(Error::InvalidArgument(format!("structure_size {} outside (0, 0.5]", self.structure_size)));
        }
        if !(self.fg_fraction > 0.0 && self.fg_fraction < 1.0) || !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument("fg_fraction must lie in (0, 1) and noise_sigma ≥ 0".into()));
        }
        Ok(())
    }

    fn voxels(&self) -> f64 {
        self.dims.iter().map(|&d| d as f64).product()
    }

    fn min_dim(&self) -> f64 {
        *self.dims.iter().min().expect("3 dims") as f64
    }
}

/// A generated phantom. Volumes are re-derived on demand from the primitives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedInstance {
    pub config: SynthConfig,
    pub primitives: Vec<Primitive>,
    pub labels: LabelSet,
    pub foreground_voxels: usize,
    pub achieved_fg_fraction: f64,
}

impl GeneratedInstance {
    pub fn dims(&self) -> Extent {
        self.config.dims
    }

    pub fn inside(&self, p: [f64; 3]) -> bool {
        self.primitives.iter().any(|q| q.contains(p))
    }

    /// Ground-truth planes in z order.
    pub fn ground_truth(&self) -> GroundTruthPlanes<'_> {
        GroundTruthPlanes::new(&self.primitives, self.config.dims)
    }

    /// Noisy intensity planes in z order.
    pub fn intensity(&self) -> impl Iterator<Item = Vec<f32>> + '_ {
        let c = &self.config;
        let plane = (c.dims[0] * c.dims[1]) as u64;
        self.ground_truth()
            .enumerate()
            .map(move |(z, m)| noisy_plane(&m, z as u64 * plane, c.rng_seed, c.noise_sigma, c.bg_mean, c.fg_mean))
    }

    /// Builds the input pyramid from the noisy stream, in memory or at `dest`.
    pub fn build_tree(&self, brick_side: usize, dest: Option<&Path>) -> Result<(OctreeVolume, BuildStats)> {
        let meta = VolumeMeta::new(self.config.dims.map(|d| d as u64), ValueKind::Intensity, SourceDtype::F32);
        let tree = match dest {
            Some(p) => OctreeVolume::create_file(p, meta, brick_side)?,
            None => OctreeVolume::in_memory(meta, brick_side)?,
        };
        build_octree(tree, self.intensity().map(Ok))
    }

    /// The audit manifest: configuration, primitives, labels and achieved fraction.
    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Generates the instance described by `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<GeneratedInstance> {
    cfg.validate()?;
    match cfg.scenario {
        Scenario::Cells => generate_cells(cfg),
        Scenario::Vessels => generate_vessels(cfg),
        Scenario::Sphere => generate_sphere(cfg),
    }
}

fn geometry_rng(cfg: &SynthConfig) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    // stream 0 is the noise keystream
    rng.set_stream(1);
    rng
}

fn snap(p: [f64; 3]) -> [f64; 3] {
    p.map(|c| c.floor() + 0.5)
}

fn in_volume(p: [f64; 3], dims: Extent) -> bool {
    (0..3).all(|a| p[a] >= 0.0 && p[a] < dims[a] as f64)
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

fn add(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.map(|c| c / n)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Unit vector within `half_angle` of `axis`, uniform over the spherical cap.
fn random_in_cone(rng: &mut ChaCha8Rng, axis: [f64; 3], half_angle: f64) -> [f64; 3] {
    let cos_t: f64 = rng.random_range(half_angle.cos()..=1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let sin_t = (1.0 - cos_t * cos_t).sqrt();
    let (u, v) = perpendicular_basis(axis);
    [0, 1, 2].map(|a| axis[a] * cos_t + sin_t * (phi.cos() * u[a] + phi.sin() * v[a]))
}

fn perpendicular_basis(axis: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let u = normalize(cross(axis, helper));
    (u, cross(axis, u))
}

const SEED_ATTEMPTS: usize = 1000;
const PLACEMENT_ATTEMPTS: usize = 100_000;

/// Grows the primitive list until the rasterized foreground reaches the target.
fn fill_to_target(
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
    mut propose: impl FnMut(&mut ChaCha8Rng, &[Primitive]) -> Option<Vec<Primitive>>,
) -> Result<(Vec<Primitive>, usize)> {
    let target = cfg.fg_fraction * cfg.voxels();
    let mut prims: Vec<Primitive> = Vec::new();
    let mut estimate = 0.0;
    let mut attempts = 0;
    loop {
        while estimate < target {
            attempts += 1;
            if attempts > PLACEMENT_ATTEMPTS {
                let count = foreground_count(&prims, cfg.dims);
                return Err(Error::Generation {
                    reason: "placement budget exhausted".into(),
                    achieved: count as f64 / cfg.voxels(),
                });
            }
            if let Some(new) = propose(rng, &prims) {
                estimate += new.iter().map(Primitive::volume).sum::<f64>();
                prims.extend(new);
            }
        }
        let count = foreground_count(&prims, cfg.dims);
        if count as f64 >= target {
            return Ok((prims, count));
        }
        estimate = count as f64;
    }
}

fn instance(cfg: &SynthConfig, primitives: Vec<Primitive>, labels: Vec<Label>, count: usize) -> Result<GeneratedInstance> {
    Ok(GeneratedInstance {
        config: cfg.clone(),
        primitives,
        labels: LabelSet::from_labels(labels)?,
        foreground_voxels: count,
        achieved_fg_fraction: count as f64 / cfg.voxels(),
    })
}

/// Background seed at `distance` from `origin` along a random direction drawn
/// by `dir`, outside every primitive and inside the volume.
fn background_seed(
    rng: &mut ChaCha8Rng,
    prims: &[Primitive],
    dims: Extent,
    origin: [f64; 3],
    distance: f64,
    mut dir: impl FnMut(&mut ChaCha8Rng) -> [f64; 3],
) -> Option<[f64; 3]> {
    (0..SEED_ATTEMPTS).find_map(|_| {
        let p = snap(add(origin, dir(rng), distance));
        (in_volume(p, dims) && !prims.iter().any(|q| q.contains(p))).then_some(p)
    })
}

fn generate_cells(cfg: &SynthConfig) -> Result<GeneratedInstance> {
    let mut rng = geometry_rng(cfg);
    let (lo, hi) = (cfg.structure_size / 2.0 * cfg.min_dim(), cfg.structure_size * cfg.min_dim());
    let dims = cfg.dims;
    let (spheres, count) = fill_to_target(cfg, &mut rng, |rng, prims| {
        let radius = rng.random_range(lo..=hi) / 2.0;
        let center = [0, 1, 2].map(|a| rng.random_range(radius..=dims[a] as f64 - radius));
        let new = Primitive::Sphere { center, radius };
        let clash = prims.iter().any(|p| match *p {
            Primitive::Sphere { center: c, .. } => p.contains(center) || new.contains(c),
            _ => false,
        });
        (!clash).then(|| vec![new])
    })?;
    let mut labels = Vec::new();
    for s in &spheres {
        let Primitive::Sphere { center, radius } = *s else { unreachable!() };
        labels.push(Label::point(0, snap(center), 1.0));
        for _ in 0..2 {
            match background_seed(&mut rng, &spheres, dims, center, 2.0 * radius, random_unit) {
                Some(p) => labels.push(Label::point(0, p, 0.0)),
                None => log::warn!("no background seed found near cell at {center:?}"),
            }
        }
    }
    instance(cfg, spheres, labels, count)
}

fn inward_normal(face: usize) -> [f64; 3] {
    let mut n = [0.0; 3];
    n[face / 2] = if face.is_multiple_of(2) { 1.0 } else { -1.0 };
    n
}

/// Clips `p0 + t·dir`, `t ∈ [0, len]`, to the volume; returns the end and whether it was clipped.
fn clip_to_volume(p0: [f64; 3], dir: [f64; 3], len: f64, dims: Extent) -> ([f64; 3], bool) {
    let mut t = len;
    for a in 0..3 {
        if dir[a] > 0.0 {
            t = t.min((dims[a] as f64 - p0[a]) / dir[a]);
        } else if dir[a] < 0.0 {
            t = t.min(-p0[a] / dir[a]);
        }
    }
    let t = t.max(0.0);
    (add(p0, dir, t), t < len)
}

const BRANCH_HALF_ANGLE: f64 = 40.0 * PI / 180.0;
const MIN_VESSEL_RADIUS: f64 = 1.5;
const DIRECTION_ATTEMPTS: usize = 100;

fn grow_vessel(
    rng: &mut ChaCha8Rng,
    dims: Extent,
    start: [f64; 3],
    dir: [f64; 3],
    radius: f64,
    out: &mut Vec<Primitive>,
) {
    let (end, clipped) = clip_to_volume(start, dir, 5.0 * radius, dims);
    out.push(Primitive::Capsule {
        p0: start,
        p1: end,
        radius,
    });
    let child = radius / SQRT_2;
    if clipped || child < MIN_VESSEL_RADIUS {
        return;
    }
    for _ in 0..2 {
        let mut d = random_in_cone(rng, dir, BRANCH_HALF_ANGLE);
        for _ in 1..DIRECTION_ATTEMPTS {
            if in_volume(add(end, d, 1.0), dims) {
                break;
            }
            d = random_in_cone(rng, dir, BRANCH_HALF_ANGLE);
        }
        grow_vessel(rng, dims, end, d, child, out);
    }
}

fn generate_vessels(cfg: &SynthConfig) -> Result<GeneratedInstance> {
    let mut rng = geometry_rng(cfg);
    let (lo, hi) = (cfg.structure_size / 2.0 * cfg.min_dim(), cfg.structure_size * cfg.min_dim());
    let dims = cfg.dims;
    let mut trees: Vec<std::ops::Range<usize>> = Vec::new();
    let mut total = 0;
    let (capsules, count) = fill_to_target(cfg, &mut rng, |rng, _| {
        let radius = rng.random_range(lo..=hi) / 2.0;
        let face = rng.random_range(0..6);
        let axis = face / 2;
        let mut start = [0, 1, 2].map(|a| rng.random_range(radius..=dims[a] as f64 - radius));
        start[axis] = if face % 2 == 0 { 0.0 } else { dims[axis] as f64 };
        let dir = random_in_cone(rng, inward_normal(face), BRANCH_HALF_ANGLE);
        let mut segs = Vec::new();
        grow_vessel(rng, dims, start, dir, radius, &mut segs);
        trees.push(total..total + segs.len());
        total += segs.len();
        Some(segs)
    })?;
    let mut labels = Vec::new();
    for range in &trees {
        let segs = if cfg.seeds_per_segment {
            range.clone()
        } else {
            range.start..range.start + 1
        };
        for seg in &capsules[segs] {
            let Primitive::Capsule { p0, p1, radius } = *seg else { unreachable!() };
            let axis = normalize([p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]]);
            for t in [1.0 / 3.0, 2.0 / 3.0] {
                let c = [0, 1, 2].map(|a| p0[a] + t * (p1[a] - p0[a]));
                let fg = snap(c);
                if !in_volume(fg, dims) || !seg.contains(fg) {
                    continue;
                }
                labels.push(Label::point(0, fg, 1.0));
                let (u, v) = perpendicular_basis(axis);
                let perp = |rng: &mut ChaCha8Rng| {
                    let phi: f64 = rng.random_range(0.0..2.0 * PI);
                    [0, 1, 2].map(|a| phi.cos() * u[a] + phi.sin() * v[a])
                };
                match background_seed(&mut rng, &capsules, dims, c, 2.0 * radius, perp) {
                    Some(p) => labels.push(Label::point(0, p, 0.0)),
                    None => log::warn!("no background seed found beside vessel at {c:?}"),
                }
            }
        }
    }
    instance(cfg, capsules, labels, count)
}

/// Sphere radius as a fraction of the smallest side; the surface-brick analysis uses the same object.
pub const SPHERE_RADIUS: f64 = 0.25;

fn generate_sphere(cfg: &SynthConfig) -> Result<GeneratedInstance> {
    let dims = cfg.dims;
    let center = dims.map(|d| d as f64 / 2.0);
    let radius = SPHERE_RADIUS * cfg.min_dim();
    let sphere = Primitive::Sphere { center, radius };
    let mut labels = vec![Label::point(0, snap(center), 1.0)];
    for a in 0..3 {
        for s in [-0.5, 0.5] {
            let mut p = center;
            p[a] += s * radius;
            labels.push(Label::point(0, snap(p), 1.0));
        }
    }
    for corner in 0..8 {
        let p = [0, 1, 2].map(|a| {
            let f = if corner >> a & 1 == 0 { 0.05 } else { 0.95 };
            f * dims[a] as f64
        });
        labels.push(Label::point(0, snap(p), 0.0));
    }
    let prims = vec![sphere];
    let count = foreground_count(&prims, dims);
    instance(cfg, prims, labels, count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_seeds(inst: &GeneratedInstance) {
        for l in inst.labels.iter() {
            let crate::engine::Geometry::Point { position } = l.geometry else { panic!() };
            let center = position.map(|c| c.floor() + 0.5);
            assert_eq!(inst.inside(center), l.seed_value > 0.5, "{l:?}");
        }
    }

    #[test]
    fn cells_reach_fraction_and_place_valid_seeds() {
        for seed in 0..3 {
            let inst = generate(&SynthConfig::new(Scenario::Cells, [128; 3], 0.03, seed)).unwrap();
            assert!((0.008..=0.012).contains(&inst.achieved_fg_fraction), "{}", inst.achieved_fg_fraction);
            check_seeds(&inst);
            for (i, a) in inst.primitives.iter().enumerate() {
                for (j, b) in inst.primitives.iter().enumerate() {
                    if let (Primitive::Sphere { center, .. }, true) = (a, i != j) {
                        assert!(!b.contains(*center));
                    }
                }
            }
        }
    }

    #[test]
    fn vessels_branch_rules() {
        let inst = generate(&SynthConfig::new(Scenario::Vessels, [128; 3], 0.03, 1)).unwrap();
        assert!((0.008..=0.012).contains(&inst.achieved_fg_fraction), "{}", inst.achieved_fg_fraction);
        check_seeds(&inst);
        for w in inst.primitives.windows(2) {
            if let (Primitive::Capsule { p1, radius: r0, .. }, Primitive::Capsule { p0, radius: r1, .. }) = (w[0], w[1]) {
                if p1 == p0 {
                    assert!((r1 - r0 / SQRT_2).abs() < 1e-12);
                    assert!(r1 >= MIN_VESSEL_RADIUS);
                }
            }
        }
        for p in &inst.primitives {
            let Primitive::Capsule { p0, p1, radius } = *p else { panic!() };
            let len = (0..3).map(|a| (p1[a] - p0[a]).powi(2)).sum::<f64>().sqrt();
            assert!(len <= 5.0 * radius + 1e-9);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig::new(Scenario::Cells, [32; 3], 0.1, 9);
        let cfg = SynthConfig {
            structure_size: 0.3,
            ..cfg
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.intensity().zip(b.intensity()).all(|(x, y)| x == y));
    }

    #[test]
    fn sphere_seeds() {
        let inst = generate(&SynthConfig::new(Scenario::Sphere, [64; 3], 0.03, 0)).unwrap();
        check_seeds(&inst);
        assert_eq!(inst.labels.len(), 15);
        let expect = (4.0 / 3.0) * PI * 16f64.powi(3) / 64f64.powi(3);
        assert!((inst.achieved_fg_fraction - expect).abs() < 0.002);
    }
}
