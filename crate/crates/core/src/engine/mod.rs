//! Hierarchical random walker over the octree pyramid.
//!
//! Levels are processed top-down as barriers; bricks within a level run in
//! parallel and each depends only on the coarser levels, so results do not
//! depend on the worker count. Output trees store one probability brick per
//! solved node; nodes below a pruned node stay absent and are sampled from
//! their nearest stored ancestor ([`fill_region`]).

mod config;
mod labels;
mod multiclass;
mod run;
mod session;
mod tree;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

pub use config::{EngineConfig, Pruning};
pub use labels::{transform_labels, Geometry, Label, LabelSet};
pub use multiclass::{class_map, run_multiclass, MultiClassResult};
pub use run::{
    run_full, run_incremental, shell_indices, upsampled_parent, CancelToken, LevelStats, Progress, RunControl,
    RunMode, RunStats,
};
pub use session::{check_seeds, compute_segmentation, planned_mode, ComputeMode, LabelOp, Segmentation, SessionState};
pub use tree::{fill_region, prunable, NodeRecord, NodeStatus, ProbabilityTree, Prune, StatusCounts};

fn scratch_path(dir: &Path, class: u32) -> PathBuf {
    static NEXT: AtomicU64 = AtomicU64::new(0);
    let n = NEXT.fetch_add(1, Ordering::Relaxed);
    dir.join(format!("probability-c{class}-{}-{n}.hrov", std::process::id()))
}
