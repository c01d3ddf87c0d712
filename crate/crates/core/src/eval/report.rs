use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::dice::DiceAccumulator;
use crate::engine::{run_full, EngineConfig, LevelStats, ProbabilityTree, RunControl, RunStats};
use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::synth::GeneratedInstance;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub build_seconds: f64,
    pub segment_seconds: f64,
    pub score_seconds: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub solves: usize,
    pub leaf_solves: usize,
    pub iterations: usize,
    pub nonconverged: usize,
    pub max_clamp: f64,
}

/// Everything measured about one segmentation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: EngineConfig,
    pub phases: PhaseTimes,
    pub levels: Vec<LevelStats>,
    pub peak_resident_bricks: usize,
    pub residency_bound: usize,
    pub solver: SolverSummary,
    pub dice: Option<f64>,
}

impl RunReport {
    pub fn new(config: &EngineConfig, stats: &RunStats, phases: PhaseTimes, dice: Option<f64>) -> Result<Self> {
        for l in &stats.levels {
            if l.counts.total() != l.nodes {
                return Err(Error::Invariant(format!(
                    "level {} status counts sum to {} of {} nodes",
                    l.level,
                    l.counts.total(),
                    l.nodes
                )));
            }
        }
        Ok(RunReport {
            config: config.clone(),
            phases,
            levels: stats.levels.clone(),
            peak_resident_bricks: stats.peak_resident_bricks,
            residency_bound: stats.residency_bound(),
            solver: SolverSummary {
                solves: stats.solves(),
                leaf_solves: stats.leaf_solves(),
                iterations: stats.iterations(),
                nonconverged: stats.levels.iter().map(|l| l.nonconverged).sum(),
                max_clamp: stats.max_clamp,
            },
            dice,
        })
    }
}

/// Full-resolution probability planes in z order, materialized one brick slab at a time.
pub fn leaf_planes(tree: &ProbabilityTree) -> impl Iterator<Item = Result<Vec<f32>>> + '_ {
    let g = *tree.geometry();
    let leaf = g.leaf_level();
    let [dx, dy, dz] = g.level_dims(leaf);
    let s = g.brick_side();
    (0..dz.div_ceil(s)).flat_map(move |kz| {
        let depth = s.min(dz - kz * s);
        let planes: Vec<Result<Vec<f32>>> = match tree.fill_region(leaf, &Region::new([0, 0, kz * s], [dx, dy, depth])) {
            Ok(slab) => slab.chunks(dx * dy).map(|p| Ok(p.to_vec())).collect(),
            Err(e) => vec![Err(e)],
        };
        planes
    })
}

/// Leaf planes thresholded at `level` (strictly greater is foreground).
pub fn mask_planes(tree: &ProbabilityTree, level: f32) -> impl Iterator<Item = Result<Vec<bool>>> + '_ {
    leaf_planes(tree).map(move |p| p.map(|p| p.iter().map(|&v| v > level).collect()))
}

/// Builds the instance's input, runs a full segmentation and scores it against ground truth.
pub fn segment_and_score(
    instance: &GeneratedInstance,
    cfg: &EngineConfig,
    ctl: &RunControl,
) -> Result<(ProbabilityTree, RunReport)> {
    let t = Instant::now();
    let (input, _) = instance.build_tree(cfg.brick_side, None)?;
    let build_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let (tree, stats) = run_full(&input, &instance.labels, 0, cfg, ctl)?;
    let segment_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let mut acc = DiceAccumulator::default();
    for (pred, truth) in mask_planes(&tree, 0.5).zip(instance.ground_truth()) {
        acc.push(&pred?, &truth)?;
    }
    let phases = PhaseTimes {
        build_seconds,
        segment_seconds,
        score_seconds: t.elapsed().as_secs_f64(),
    };
    let report = RunReport::new(cfg, &stats, phases, Some(acc.value()))?;
    Ok((tree, report))
}
