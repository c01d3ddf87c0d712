use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::EngineConfig;
use super::labels::{transform_labels, LabelSet};
use super::tree::{fill_region, prunable, NodeRecord, NodeStatus, ProbabilityTree, Prune, StatusCounts};
use crate::error::{Error, Result};
use crate::geometry::{self, coarse_position, copy_box, trilinear, Region};
use crate::octree::{sample_neighborhood_tracked, Brick, NodeAddress, OctreeVolume, Residency, TreeGeometry};
use crate::par;
use crate::rw::{compute_weights, rasterize_labels, solve};

/// Cooperative cancellation flag, checked before every brick.
#[derive(Clone, Debug, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// Brick progress. `known` grows as levels are discovered.
#[derive(Debug, Default)]
pub struct Progress {
    done: AtomicUsize,
    known: AtomicUsize,
}

impl Progress {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn done(&self) -> usize {
        self.done.load(Ordering::SeqCst)
    }

    pub fn known(&self) -> usize {
        self.known.load(Ordering::SeqCst)
    }
}

/// Cross-cutting run state supplied by the caller.
#[derive(Clone, Debug)]
pub struct RunControl {
    pub cancel: CancelToken,
    pub progress: Arc<Progress>,
    pub residency: Arc<Residency>,
    /// Directory for file-backed output trees; in memory when `None`.
    pub output_dir: Option<PathBuf>,
}

impl Default for RunControl {
    fn default() -> Self {
        RunControl {
            cancel: CancelToken::new(),
            progress: Progress::new(),
            residency: Residency::new(),
            output_dir: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Full,
    Incremental,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: u32,
    pub nodes: usize,
    pub counts: StatusCounts,
    /// Nodes whose neighborhood was solved, including ones later reused.
    pub solves: usize,
    pub iterations: usize,
    pub nonconverged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub class_id: u32,
    pub mode: RunMode,
    pub levels: Vec<LevelStats>,
    /// Peak resident voxels of bricks, neighborhoods and solver state, in full-brick units.
    pub peak_resident_bricks: usize,
    pub peak_resident_neighborhoods: usize,
    pub workers: usize,
    pub wall_seconds: f64,
    /// Largest amount any solver iterate was clamped into `[0, 1]`.
    pub max_clamp: f64,
}

impl RunStats {
    pub fn solves(&self) -> usize {
        self.levels.iter().map(|l| l.solves).sum()
    }

    pub fn leaf_solves(&self) -> usize {
        self.levels.last().map_or(0, |l| l.solves)
    }

    pub fn iterations(&self) -> usize {
        self.levels.iter().map(|l| l.iterations).sum()
    }

    pub fn totals(&self) -> StatusCounts {
        let mut t = StatusCounts::default();
        for l in &self.levels {
            t.computed += l.counts.computed;
            t.pruned_hom += l.counts.pruned_hom;
            t.pruned_dt += l.counts.pruned_dt;
            t.reused += l.counts.reused;
            t.absent += l.counts.absent;
        }
        t
    }

    /// Resident-brick bound for this run: `workers · (27 + levels)`.
    pub fn residency_bound(&self) -> usize {
        self.workers * (27 + self.levels.len())
    }
}

struct Ctx<'a> {
    input: &'a OctreeVolume,
    out: &'a OctreeVolume,
    labels: &'a LabelSet,
    class: u32,
    cfg: &'a EngineConfig,
    previous: Option<&'a ProbabilityTree>,
    fresh: &'a BTreeSet<u64>,
    ctl: &'a RunControl,
}

struct Outcome {
    addr: NodeAddress,
    record: NodeRecord,
    descend: bool,
    grafted: Vec<(NodeAddress, NodeRecord)>,
    iterations: usize,
    converged: bool,
    clamped_by: f64,
}

/// Parent-level solution resampled onto `region` at `level`.
pub fn upsampled_parent(out: &OctreeVolume, level: u32, region: &Region, residency: &Arc<Residency>) -> Result<Vec<f32>> {
    let g = out.geometry();
    let pd = g.level_dims(level - 1);
    let hi = region.hi();
    let clo = region.origin.map(|v| (v / 2).saturating_sub(1));
    let chi = [0, 1, 2].map(|a| ((hi[a] - 1) / 2 + 2).min(pd[a]));
    let coarse = Region::from_bounds(clo, chi);
    let values = fill_region(out, level - 1, &coarse, residency)?;
    Ok(region
        .positions()
        .map(|p| {
            let pos = [0, 1, 2].map(|a| coarse_position(p[a], 1) - clo[a] as f64);
            trilinear(&values, coarse.extent, pos) as f32
        })
        .collect())
}

/// Indices of the one-voxel outer shell of `region`, optionally skipping faces
/// that coincide with the volume border.
pub fn shell_indices(region: &Region, level_dims: [usize; 3], volume_faces: bool) -> Vec<usize> {
    let ext = region.extent;
    let hi = region.hi();
    let lo_face = [0, 1, 2].map(|a| volume_faces || region.origin[a] > 0);
    let hi_face = [0, 1, 2].map(|a| volume_faces || hi[a] < level_dims[a]);
    Region::new([0; 3], ext)
        .positions()
        .enumerate()
        .filter(|(_, p)| (0..3).any(|a| (lo_face[a] && p[a] == 0) || (hi_face[a] && p[a] + 1 == ext[a])))
        .map(|(i, _)| i)
        .collect()
}

fn process(ctx: &Ctx, addr: NodeAddress) -> Result<Outcome> {
    if ctx.ctl.cancel.is_cancelled() {
        return Err(Error::Cancelled);
    }
    let res = &ctx.ctl.residency;
    let g: &TreeGeometry = ctx.input.geometry();
    let leaf = addr.level == g.leaf_level();

    let nb = sample_neighborhood_tracked(ctx.input, addr, ctx.cfg.expansion, res)?;
    let region = nb.region;
    // Solver state for this node, held until the result is written.
    let _working = res.acquire_buffer(region.volume());
    let center = nb.center_region;
    let ext = region.extent;
    let weights = compute_weights(&nb.voxels, ext, &ctx.cfg.weight);
    drop(nb);

    let local = transform_labels(ctx.labels, ctx.class, g, addr.level, &region, ctx.fresh);
    let mut seeds = rasterize_labels(&local, ext);
    let in_center = |i: usize| {
        let p = geometry::delinear(ext, i);
        center.contains([0, 1, 2].map(|a| p[a] + region.origin[a]))
    };
    let conflict = seeds.conflicts().iter().any(|&i| in_center(i));
    let fresh_conflict = !seeds.fresh_conflicts().is_empty();

    let parent = if addr.level > 0 {
        let field = upsampled_parent(ctx.out, addr.level, &region, res)?;
        for i in shell_indices(&region, g.level_dims(addr.level), ctx.cfg.seed_volume_faces) {
            seeds.insert_boundary(i, field[i] as f64);
        }
        Some(field)
    } else {
        None
    };

    let previous = match ctx.previous {
        Some(p) => p.volume().read_brick_tracked(addr, res)?,
        None => None,
    };
    let init = match (&previous, parent) {
        (Some(old), field) => {
            let mut init = field.unwrap_or_else(|| vec![0.5; region.volume()]);
            copy_box(old.voxels(), &center, &mut init, &region, &center);
            Some(init)
        }
        (None, field) => field,
    };
    let sol = solve(&weights, &seeds, &ctx.cfg.solver, init.as_deref())?;
    drop(weights);
    if !sol.converged {
        log::warn!(
            "{addr}: solver stopped at residual {:.3e} after {} iterations",
            sol.final_residual,
            sol.iterations_used
        );
    }
    let mut voxels = vec![0f32; center.volume()];
    copy_box(&sol.probabilities, &region, &mut voxels, &center, &center);
    let brick = Brick::new(center.extent, voxels)?;

    let mut outcome = Outcome {
        addr,
        record: NodeRecord {
            status: NodeStatus::Computed,
            conflict,
        },
        descend: false,
        grafted: Vec::new(),
        iterations: sol.iterations_used,
        converged: sol.converged,
        clamped_by: sol.clamped_by,
    };

    if let (Some(old), Some(prev)) = (&previous, ctx.previous) {
        let diff = brick
            .voxels()
            .iter()
            .zip(old.voxels())
            .fold(0f64, |m, (a, b)| m.max((*a as f64 - *b as f64).abs()));
        if diff < ctx.cfg.t_inc && !conflict && !fresh_conflict {
            ctx.out.write_brick(addr, old)?;
            outcome.record.status = if addr.level == 0 {
                NodeStatus::Computed
            } else {
                NodeStatus::Reused
            };
            let mut stack: Vec<NodeAddress> = g.children(addr).collect();
            while let Some(c) = stack.pop() {
                if let Some(b) = prev.volume().read_brick_tracked(c, res)? {
                    ctx.out.write_brick(c, &b)?;
                    let record = NodeRecord {
                        status: NodeStatus::Reused,
                        conflict: prev.record(c).conflict,
                    };
                    outcome.grafted.push((c, record));
                    stack.extend(g.children(c));
                }
            }
            return Ok(outcome);
        }
    }

    ctx.out.write_brick(addr, &brick)?;
    if !leaf {
        outcome.record.status = match prunable(brick.stats(), conflict, ctx.cfg) {
            Prune::Keep => NodeStatus::Computed,
            Prune::Hom => NodeStatus::PrunedHom,
            Prune::Dt => NodeStatus::PrunedDt,
        };
        outcome.descend = outcome.record.status == NodeStatus::Computed;
    }
    Ok(outcome)
}

fn run(
    input: &OctreeVolume,
    labels: &LabelSet,
    class: u32,
    cfg: &EngineConfig,
    previous: Option<(&ProbabilityTree, &BTreeSet<u64>)>,
    ctl: &RunControl,
) -> Result<(ProbabilityTree, RunStats)> {
    let started = Instant::now();
    cfg.validate()?;
    labels.check_class(class)?;
    if let Some((prev, _)) = previous {
        if prev.geometry() != input.geometry() {
            return Err(Error::InvalidArgument("previous tree does not match the input geometry".into()));
        }
    }
    let g = *input.geometry();
    let path = ctl.output_dir.as_ref().map(|d| super::scratch_path(d, class));
    let mut out = ProbabilityTree::create(input, class, path.as_deref())?;
    out.scratch = path.is_some();
    let empty = BTreeSet::new();
    let ctx = Ctx {
        input,
        out: out.volume(),
        labels,
        class,
        cfg,
        previous: previous.map(|p| p.0),
        fresh: previous.map_or(&empty, |p| p.1),
        ctl,
    };
    let mut levels: Vec<LevelStats> = (0..g.levels())
        .map(|level| LevelStats {
            level,
            nodes: g.node_count(level),
            ..Default::default()
        })
        .collect();
    let mut records = Vec::new();
    let mut max_clamp = 0f64;
    let mut queue = vec![NodeAddress::ROOT];
    for level in 0..g.levels() {
        if queue.is_empty() {
            break;
        }
        ctl.progress.known.fetch_add(queue.len(), Ordering::SeqCst);
        let results = par::map(cfg.worker_count, queue, |addr| {
            let r = process(&ctx, addr);
            if r.is_ok() {
                ctl.progress.done.fetch_add(1, Ordering::SeqCst);
            }
            r
        });
        let mut next = Vec::new();
        let ls = &mut levels[level as usize];
        for r in results {
            let o = r?;
            ls.solves += 1;
            ls.iterations += o.iterations;
            ls.nonconverged += usize::from(!o.converged);
            max_clamp = max_clamp.max(o.clamped_by);
            if o.descend {
                next.extend(g.children(o.addr));
            }
            records.push((o.addr, o.record));
            records.extend(o.grafted);
        }
        queue = next;
    }
    for (addr, record) in records {
        out.set_record(addr, record);
    }
    out.volume().flush()?;
    for ls in &mut levels {
        ls.counts = out.counts(ls.level);
    }
    let stats = RunStats {
        class_id: class,
        mode: if previous.is_some() {
            RunMode::Incremental
        } else {
            RunMode::Full
        },
        levels,
        peak_resident_bricks: ctl.residency.peak_brick_equivalents(g.brick_side()),
        peak_resident_neighborhoods: ctl.residency.peak_neighborhoods(),
        workers: cfg.worker_count,
        wall_seconds: started.elapsed().as_secs_f64(),
        max_clamp,
    };
    Ok((out, stats))
}

/// Solves the whole pyramid top-down for `class`.
///
/// The root is solved with user seeds only. Every deeper node is solved on
/// its expanded neighborhood with user seeds plus continuous seeds on the
/// neighborhood shell, sampled from the coarser solution, and initialized
/// from that solution. Children of prunable nodes are skipped.
pub fn run_full(
    input: &OctreeVolume,
    labels: &LabelSet,
    class: u32,
    cfg: &EngineConfig,
    ctl: &RunControl,
) -> Result<(ProbabilityTree, RunStats)> {
    run(input, labels, class, cfg, None, ctl)
}

/// Like [`run_full`], but a node whose new solution stays within `t_inc` of
/// `previous` (and whose neighborhood holds no conflict involving a label in
/// `fresh`) takes the previous brick and grafts the previous subtree.
pub fn run_incremental(
    input: &OctreeVolume,
    labels: &LabelSet,
    class: u32,
    cfg: &EngineConfig,
    previous: &ProbabilityTree,
    fresh: &BTreeSet<u64>,
    ctl: &RunControl,
) -> Result<(ProbabilityTree, RunStats)> {
    run(input, labels, class, cfg, Some((previous, fresh)), ctl)
}
