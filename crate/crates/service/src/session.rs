//! Sessions and their compute lifecycle.
//!
//! Label edits and compute requests go through the session's state lock, so
//! mutations are serialized. A computation runs on its own thread against a
//! snapshot of the labels; it installs its result only if the revision it was
//! started for is still current. An edit during a run cancels it, and the run
//! restarts from the new labels, incrementally when it can.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use hrw_core::engine::{
    check_seeds, compute_segmentation, planned_mode, ComputeMode, EngineConfig, LabelOp, LabelSet, Progress,
    RunControl, RunMode, RunStats, Segmentation, SessionState,
};
use hrw_core::octree::{ingest_raw_with_progress, read_sidecar, sidecar_path, OctreeVolume, MAGIC};
use hrw_core::Error as CoreError;
use serde::Serialize;

use crate::error::{core_kind, ApiError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Idle,
    Running,
    Cancelling,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProgressView {
    pub done: usize,
    /// Grows during a run as pruning decides which bricks exist.
    pub known: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorView {
    pub error: &'static str,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub revision: u64,
    pub mode: RunMode,
    pub solves: usize,
    pub leaf_solves: usize,
    pub reused: usize,
    pub pruned_hom: usize,
    pub pruned_dt: usize,
    pub wall_seconds: f64,
}

impl RunSummary {
    fn new(seg: &Segmentation) -> Self {
        let sum = |f: &dyn Fn(&RunStats) -> usize| seg.stats.iter().map(f).sum();
        RunSummary {
            revision: seg.revision,
            mode: seg.mode,
            solves: sum(&|s| s.solves()),
            leaf_solves: sum(&|s| s.leaf_solves()),
            reused: sum(&|s| s.totals().reused),
            pruned_hom: sum(&|s| s.totals().pruned_hom),
            pruned_dt: sum(&|s| s.totals().pruned_dt),
            wall_seconds: seg.stats.iter().map(|s| s.wall_seconds).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatusView {
    pub state: JobState,
    /// Current label revision.
    pub revision: u64,
    /// Jobs started so far; identifies the running or last job.
    pub job: u64,
    /// Revision the running job is computing.
    pub job_revision: Option<u64>,
    /// Mode of the running job, or of the last completed one.
    pub mode: Option<RunMode>,
    pub progress: ProgressView,
    /// Revision of the segmentation slices are served from.
    pub computed_revision: Option<u64>,
    pub last_run: Option<RunSummary>,
    pub last_error: Option<ErrorView>,
}

struct Job {
    state: JobState,
    id: u64,
    revision: Option<u64>,
    mode: Option<RunMode>,
    control: Option<RunControl>,
    /// Set by a label edit during a run: start again once the run stops.
    restart: bool,
    last_run: Option<RunSummary>,
    last_error: Option<ErrorView>,
    progress: Arc<Progress>,
}

pub struct Session {
    pub id: u64,
    pub source: PathBuf,
    state: Mutex<SessionState>,
    job: Mutex<Job>,
    output_dir: Option<PathBuf>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn error_view(e: &CoreError) -> ErrorView {
    ErrorView {
        error: core_kind(e),
        message: e.to_string(),
    }
}

/// Opens an HROV1 file, or converts a raw volume with a `<path>.json` sidecar.
/// Converted trees go to `convert_to` when given, otherwise stay in memory.
pub fn open_volume(path: &Path, brick_side: usize, convert_to: Option<&Path>) -> Result<OctreeVolume, ApiError> {
    let io = |source| CoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut head = Vec::new();
    File::open(path)
        .and_then(|f| f.take(MAGIC.len() as u64).read_to_end(&mut head))
        .map_err(io)?;
    if head == MAGIC {
        return Ok(OctreeVolume::open(path)?);
    }
    let side = sidecar_path(path);
    if !side.exists() {
        return Err(CoreError::InvalidVolume(format!(
            "{} is not an HROV1 file and has no sidecar {}",
            path.display(),
            side.display()
        ))
        .into());
    }
    let sidecar = read_sidecar(&side)?;
    let mut reported = 0;
    let (tree, stats) = ingest_raw_with_progress(path, &sidecar, brick_side, convert_to, |done, total| {
        let pct = done * 100 / total.max(1);
        if pct >= reported + 10 || done == total {
            reported = pct;
            log::info!("converting {}: {pct}% ({done}/{total} planes)", path.display());
        }
    })?;
    log::info!(
        "converted {} into {} levels, {} bricks, peak {} resident",
        path.display(),
        tree.levels(),
        stats.bricks_written,
        stats.peak_resident_bricks
    );
    Ok(tree)
}

impl Session {
    pub fn new(id: u64, source: PathBuf, input: OctreeVolume, config: EngineConfig, output_dir: Option<PathBuf>) -> Self {
        Session {
            id,
            source,
            state: Mutex::new(SessionState::new(Arc::new(input), config)),
            job: Mutex::new(Job {
                state: JobState::Idle,
                id: 0,
                revision: None,
                mode: None,
                control: None,
                restart: false,
                last_run: None,
                last_error: None,
                progress: Progress::new(),
            }),
            output_dir,
        }
    }

    pub fn input(&self) -> Arc<OctreeVolume> {
        lock(&self.state).input().clone()
    }

    pub fn config(&self) -> EngineConfig {
        lock(&self.state).config.clone()
    }

    pub fn labels(&self) -> (u64, LabelSet) {
        let st = lock(&self.state);
        (st.revision(), st.labels().clone())
    }

    pub fn segmentation(&self) -> Option<Arc<Segmentation>> {
        lock(&self.state).segmentation().cloned()
    }

    /// Applies `ops` atomically. Returns the new revision and the ids of added labels.
    pub fn update_labels(&self, ops: Vec<LabelOp>) -> Result<(u64, Vec<u64>), ApiError> {
        let mut st = lock(&self.state);
        let before: BTreeSet<u64> = st.labels().iter().map(|l| l.id).collect();
        let revision = st.update_labels(ops)?;
        let added = st.labels().iter().map(|l| l.id).filter(|id| !before.contains(id)).collect();
        let mut job = lock(&self.job);
        if job.state != JobState::Idle {
            if let Some(ctl) = &job.control {
                ctl.cancel.cancel();
            }
            job.state = JobState::Cancelling;
            job.restart = true;
        }
        Ok((revision, added))
    }

    /// Starts computing the current revision unless that is already running.
    /// Returns the job id and the revision it computes.
    pub fn compute(self: &Arc<Self>, mode: ComputeMode) -> Result<(u64, u64), ApiError> {
        let st = lock(&self.state);
        check_seeds(st.labels())?;
        let revision = st.revision();
        let mut job = lock(&self.job);
        match job.state {
            JobState::Running if job.revision == Some(revision) => return Ok((job.id, revision)),
            JobState::Running | JobState::Cancelling => {
                if let Some(ctl) = &job.control {
                    ctl.cancel.cancel();
                }
                job.state = JobState::Cancelling;
                job.restart = true;
                return Ok((job.id, revision));
            }
            JobState::Idle => {}
        }
        job.id += 1;
        job.progress = Progress::new();
        job.last_error = None;
        let ctl = self.start_attempt(&st, &mut job, mode);
        drop(job);
        drop(st);
        let session = Arc::clone(self);
        std::thread::Builder::new()
            .name(format!("session-{}-compute", self.id))
            .spawn(move || session.run_job(mode, ctl))
            .map_err(|e| ApiError::Internal(format!("cannot start computation: {e}")))?;
        let job = lock(&self.job);
        Ok((job.id, revision))
    }

    fn start_attempt(&self, st: &SessionState, job: &mut Job, mode: ComputeMode) -> RunControl {
        let ctl = RunControl {
            progress: job.progress.clone(),
            output_dir: self.output_dir.clone(),
            ..RunControl::default()
        };
        job.state = JobState::Running;
        job.revision = Some(st.revision());
        job.mode = Some(planned_mode(st.labels(), st.segmentation().map(|s| s.as_ref()), mode));
        job.control = Some(ctl.clone());
        job.restart = false;
        ctl
    }

    fn run_job(&self, mode: ComputeMode, mut ctl: RunControl) {
        // A restart after an edit uses auto mode so it can reuse the last result.
        let mut mode = mode;
        loop {
            let (input, config, labels, revision, previous) = {
                let st = lock(&self.state);
                (st.input().clone(), st.config.clone(), st.labels().clone(), st.revision(), st.segmentation().cloned())
            };
            let result = check_seeds(&labels)
                .and_then(|_| compute_segmentation(&input, &config, &labels, revision, previous.as_deref(), mode, &ctl));
            let mut st = lock(&self.state);
            let mut job = lock(&self.job);
            match result {
                Ok(seg) => {
                    let seg = Arc::new(seg);
                    if st.install(seg.clone()).is_ok() {
                        job.last_run = Some(RunSummary::new(&seg));
                        job.mode = Some(seg.mode);
                    }
                }
                Err(CoreError::Cancelled) if job.restart => {}
                Err(e) => {
                    log::warn!("session {}: computation for revision {revision} failed: {e}", self.id);
                    job.last_error = Some(error_view(&e));
                    job.restart = false;
                }
            }
            if job.restart {
                mode = ComputeMode::Auto;
                ctl = self.start_attempt(&st, &mut job, mode);
                continue;
            }
            job.state = JobState::Idle;
            job.revision = None;
            job.control = None;
            job.mode = job.last_run.as_ref().map(|r| r.mode);
            return;
        }
    }

    pub fn status(&self) -> StatusView {
        let st = lock(&self.state);
        let job = lock(&self.job);
        StatusView {
            state: job.state,
            revision: st.revision(),
            job: job.id,
            job_revision: job.revision,
            mode: job.mode,
            progress: ProgressView {
                done: job.progress.done(),
                known: job.progress.known(),
            },
            computed_revision: st.segmentation().map(|s| s.revision),
            last_run: job.last_run.clone(),
            last_error: job.last_error.clone(),
        }
    }

    /// Requests cancellation of a running job without restarting it.
    pub fn cancel(&self) {
        let mut job = lock(&self.job);
        if job.state != JobState::Idle {
            if let Some(ctl) = &job.control {
                ctl.cancel.cancel();
            }
            job.state = JobState::Cancelling;
            job.restart = false;
        }
    }
}
