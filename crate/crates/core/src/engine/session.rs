use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::EngineConfig;
use super::labels::{Label, LabelSet};
use super::multiclass::{class_map, run_multiclass};
use super::run::{run_full, run_incremental, RunControl, RunMode, RunStats};
use super::tree::ProbabilityTree;
use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::octree::OctreeVolume;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComputeMode {
    /// Incremental when a previous result exists and labels were only added.
    #[default]
    Auto,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LabelOp {
    Add { label: Label },
    Remove { id: u64 },
}

/// A completed computation and the label set it reflects.
pub struct Segmentation {
    pub revision: u64,
    pub labels: LabelSet,
    pub mode: RunMode,
    /// One tree per class; a single entry means a binary foreground/background result.
    pub trees: BTreeMap<u32, ProbabilityTree>,
    pub stats: Vec<RunStats>,
}

impl Segmentation {
    pub fn is_binary(&self) -> bool {
        self.trees.len() == 1
    }

    pub fn tree(&self, class: u32) -> Option<&ProbabilityTree> {
        self.trees.get(&class)
    }

    /// Class map over `region` at `level`. Binary results map foreground to 1
    /// and background to 0; multi-class results map to class ids.
    pub fn class_map(&self, level: u32, region: &Region) -> Result<Vec<u32>> {
        if self.is_binary() {
            let tree = self.trees.values().next().expect("one tree");
            let p = tree.fill_region(level, region)?;
            Ok(p.into_iter().map(|v| u32::from(v > 0.5)).collect())
        } else {
            class_map(&self.trees, level, region)
        }
    }
}

fn reusable(labels: &LabelSet, previous: &Segmentation, mode: ComputeMode) -> bool {
    mode == ComputeMode::Auto
        && labels.extends(&previous.labels)
        && previous.trees.keys().copied().collect::<BTreeSet<_>>() == labels.classes()
}

/// The mode [`compute_segmentation`] will use for these arguments.
pub fn planned_mode(labels: &LabelSet, previous: Option<&Segmentation>, mode: ComputeMode) -> RunMode {
    match previous {
        Some(p) if reusable(labels, p, mode) => RunMode::Incremental,
        _ => RunMode::Full,
    }
}

/// Checks that every class has the seeds its solve needs.
pub fn check_seeds(labels: &LabelSet) -> Result<()> {
    let classes = labels.classes();
    if classes.is_empty() {
        return Err(Error::Seeds("no labels".into()));
    }
    classes.iter().try_for_each(|&c| labels.check_class(c))
}

/// Runs the computation for `labels`, reusing `previous` where allowed.
pub fn compute_segmentation(
    input: &OctreeVolume,
    cfg: &EngineConfig,
    labels: &LabelSet,
    revision: u64,
    previous: Option<&Segmentation>,
    mode: ComputeMode,
    ctl: &RunControl,
) -> Result<Segmentation> {
    let classes = labels.classes();
    if classes.is_empty() {
        return Err(Error::Seeds("no labels".into()));
    }
    let previous = previous.filter(|p| reusable(labels, p, mode));
    let fresh = previous.map(|p| labels.added_since(&p.labels)).unwrap_or_default();
    let run_mode = planned_mode(labels, previous, mode);
    let (trees, stats) = if classes.len() == 1 {
        let c = *classes.first().expect("one class");
        let (tree, s) = match previous.and_then(|p| p.trees.get(&c)) {
            Some(prev) => run_incremental(input, labels, c, cfg, prev, &fresh, ctl)?,
            None => run_full(input, labels, c, cfg, ctl)?,
        };
        (BTreeMap::from([(c, tree)]), vec![s])
    } else {
        let prev = previous.map(|p| (&p.trees, &fresh));
        let res = run_multiclass(input, labels, &classes, cfg, prev, ctl)?;
        (res.trees, res.stats)
    };
    Ok(Segmentation {
        revision,
        labels: labels.clone(),
        mode: run_mode,
        trees,
        stats,
    })
}

/// One volume, its label space, and the last completed segmentation.
pub struct SessionState {
    input: Arc<OctreeVolume>,
    pub config: EngineConfig,
    labels: LabelSet,
    revision: u64,
    current: Option<Arc<Segmentation>>,
}

impl SessionState {
    pub fn new(input: Arc<OctreeVolume>, config: EngineConfig) -> Self {
        SessionState {
            input,
            config,
            labels: LabelSet::new(),
            revision: 0,
            current: None,
        }
    }

    pub fn input(&self) -> &Arc<OctreeVolume> {
        &self.input
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// The last completed segmentation, which is also the previous result for the next computation.
    pub fn segmentation(&self) -> Option<&Arc<Segmentation>> {
        self.current.as_ref()
    }

    /// Applies all operations or none; returns the new revision.
    pub fn update_labels(&mut self, ops: impl IntoIterator<Item = LabelOp>) -> Result<u64> {
        let mut next = self.labels.clone();
        for op in ops {
            match op {
                LabelOp::Add { label } => {
                    next.add(label)?;
                }
                LabelOp::Remove { id } => {
                    next.remove(id)?;
                }
            }
        }
        self.labels = next;
        self.revision += 1;
        Ok(self.revision)
    }

    /// Computes the current revision synchronously and installs the result.
    pub fn compute(&mut self, mode: ComputeMode, ctl: &RunControl) -> Result<Arc<Segmentation>> {
        let seg = compute_segmentation(
            &self.input,
            &self.config,
            &self.labels,
            self.revision,
            self.current.as_deref(),
            mode,
            ctl,
        )?;
        let seg = Arc::new(seg);
        self.install(seg.clone())?;
        Ok(seg)
    }

    /// Installs a segmentation computed elsewhere; refused unless it reflects the current revision.
    pub fn install(&mut self, seg: Arc<Segmentation>) -> Result<()> {
        if seg.revision != self.revision {
            return Err(Error::InvalidArgument(format!(
                "segmentation for revision {} is stale (current {})",
                seg.revision, self.revision
            )));
        }
        self.current = Some(seg);
        Ok(())
    }
}
