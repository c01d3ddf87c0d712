use std::collections::{BTreeMap, BTreeSet};

use super::config::EngineConfig;
use super::labels::LabelSet;
use super::run::{run_full, run_incremental, RunControl, RunStats};
use super::tree::{fill_region, ProbabilityTree};
use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::octree::OctreeVolume;

/// One probability tree per class; the class map is derived on demand.
pub struct MultiClassResult {
    pub trees: BTreeMap<u32, ProbabilityTree>,
    pub stats: Vec<RunStats>,
}

impl MultiClassResult {
    /// Argmax class of every voxel of `region` at `level`. Ties go to the lowest class id.
    pub fn class_map(&self, level: u32, region: &Region) -> Result<Vec<u32>> {
        class_map(&self.trees, level, region)
    }
}

/// Per-voxel argmax over the class trees, sampling pruned branches from their
/// nearest stored ancestor. Ties go to the lowest class id.
pub fn class_map(trees: &BTreeMap<u32, ProbabilityTree>, level: u32, region: &Region) -> Result<Vec<u32>> {
    let residency = crate::octree::Residency::new();
    let mut best: Vec<(u32, f32)> = Vec::new();
    for (&class, tree) in trees {
        let values = fill_region(tree.volume(), level, region, &residency)?;
        if best.is_empty() {
            best = values.into_iter().map(|v| (class, v)).collect();
        } else {
            for (b, v) in best.iter_mut().zip(values) {
                if v > b.1 {
                    *b = (class, v);
                }
            }
        }
    }
    Ok(best.into_iter().map(|(c, _)| c).collect())
}

/// Solves each class against the union of all other classes as background,
/// with decided-threshold pruning disabled. Classes that already have a tree
/// in `previous` are updated incrementally with `fresh` as the new labels.
pub fn run_multiclass(
    input: &OctreeVolume,
    labels: &LabelSet,
    classes: &BTreeSet<u32>,
    cfg: &EngineConfig,
    previous: Option<(&BTreeMap<u32, ProbabilityTree>, &BTreeSet<u64>)>,
    ctl: &RunControl,
) -> Result<MultiClassResult> {
    if classes.len() < 2 {
        return Err(Error::Seeds(format!("multi-class labeling needs at least 2 classes, got {}", classes.len())));
    }
    for &c in classes {
        labels.check_class(c)?;
    }
    let mut cfg = cfg.clone();
    cfg.pruning.dt_enabled = false;
    let mut trees = BTreeMap::new();
    let mut stats = Vec::new();
    for &c in classes {
        let (tree, s) = match previous.and_then(|(p, fresh)| p.get(&c).map(|t| (t, fresh))) {
            Some((prev, fresh)) => run_incremental(input, labels, c, &cfg, prev, fresh, ctl)?,
            None => run_full(input, labels, c, &cfg, ctl)?,
        };
        trees.insert(c, tree);
        stats.push(s);
    }
    Ok(MultiClassResult { trees, stats })
}
