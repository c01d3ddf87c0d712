use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hrw_core::engine::{fill_region, ComputeMode, EngineConfig, LabelOp, LabelSet};
use hrw_core::geometry::{Extent, Region};
use hrw_core::octree::{Residency, ValueKind, VolumeMeta};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::session::{open_volume, Session, StatusView};
use crate::tile::{Tile, TileData};

/// Server-wide settings.
#[derive(Clone, Debug, Default)]
pub struct ServiceConfig {
    /// Engine configuration for new sessions; requests may override it.
    pub engine: EngineConfig,
    /// Where converted volumes and probability trees are written. In memory when `None`.
    pub work_dir: Option<PathBuf>,
}

pub struct AppState {
    config: ServiceConfig,
    sessions: RwLock<BTreeMap<u64, Arc<Session>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState {
            config,
            sessions: RwLock::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    fn session(&self, id: u64) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no session {id}")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(open_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/labels", post(update_labels))
        .route("/sessions/{id}/compute", post(compute))
        .route("/sessions/{id}/cancel", post(cancel))
        .route("/sessions/{id}/status", get(status))
        .route("/sessions/{id}/slice", get(slice))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker task failed: {e}")))?
}

#[derive(Debug, Deserialize)]
pub struct OpenRequest {
    pub path: PathBuf,
    /// Brick side for raw conversion; defaults to the engine configuration's.
    pub brick_side: Option<usize>,
    pub config: Option<EngineConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub id: u64,
    pub source: PathBuf,
    pub meta: VolumeMeta,
    pub levels: u32,
    pub brick_side: usize,
    /// Volume dimensions per lod; lod 0 is full resolution.
    pub lod_dims: Vec<Extent>,
    pub revision: u64,
    pub labels: LabelSet,
    pub config: EngineConfig,
}

fn session_view(s: &Session) -> SessionView {
    let input = s.input();
    let g = input.geometry();
    let (revision, labels) = s.labels();
    SessionView {
        id: s.id,
        source: s.source.clone(),
        meta: input.meta().clone(),
        levels: g.levels(),
        brick_side: g.brick_side(),
        lod_dims: (0..g.levels()).rev().map(|l| g.level_dims(l)).collect(),
        revision,
        labels,
        config: s.config(),
    }
}

async fn open_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<OpenRequest>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let config = req.config.unwrap_or_else(|| app.config.engine.clone());
    config.validate()?;
    let id = app.next_id.fetch_add(1, Ordering::Relaxed);
    let work_dir = app.config.work_dir.clone();
    let side = req.brick_side.unwrap_or(config.brick_side);
    let path = req.path.clone();
    let input = blocking(move || {
        let dest = work_dir.as_ref().map(|d| d.join(format!("session-{id}.hrov")));
        open_volume(&path, side, dest.as_deref())
    })
    .await?;
    if input.meta().value_kind != ValueKind::Intensity {
        return Err(ApiError::BadRequest(format!("{} holds probabilities, not intensities", req.path.display())));
    }
    let session = Arc::new(Session::new(id, req.path, input, config, app.config.work_dir.clone()));
    let view = session_view(&session);
    app.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id, session);
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Json<SessionView>, ApiError> {
    Ok(Json(session_view(&*app.session(id)?)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelsRequest {
    pub ops: Vec<LabelOp>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelsResponse {
    pub revision: u64,
    /// Ids assigned to added labels, in request order.
    pub added: Vec<u64>,
}

async fn update_labels(
    State(app): State<Arc<AppState>>,
    Path(id): Path<u64>,
    Json(req): Json<LabelsRequest>,
) -> Result<Json<LabelsResponse>, ApiError> {
    let (revision, added) = app.session(id)?.update_labels(req.ops)?;
    Ok(Json(LabelsResponse { revision, added }))
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct ComputeRequest {
    #[serde(default)]
    pub mode: ComputeMode,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ComputeResponse {
    pub job: u64,
    pub revision: u64,
}

async fn compute(
    State(app): State<Arc<AppState>>,
    Path(id): Path<u64>,
    body: Option<Json<ComputeRequest>>,
) -> Result<(StatusCode, Json<ComputeResponse>), ApiError> {
    let mode = body.map(|Json(b)| b.mode).unwrap_or_default();
    let (job, revision) = app.session(id)?.compute(mode)?;
    Ok((StatusCode::ACCEPTED, Json(ComputeResponse { job, revision })))
}

async fn cancel(State(app): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Json<StatusView>, ApiError> {
    let s = app.session(id)?;
    s.cancel();
    Ok(Json(s.status()))
}

async fn status(State(app): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Json<StatusView>, ApiError> {
    Ok(Json(app.session(id)?.status()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceKind {
    Intensity,
    Probability,
    Classmap,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceFormat {
    #[default]
    Tile,
    Png,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SliceQuery {
    pub kind: SliceKind,
    pub class: Option<u32>,
    /// `x`, `y` or `z`: the axis held fixed.
    pub axis: char,
    pub index: usize,
    #[serde(default)]
    pub lod: u32,
    #[serde(default)]
    pub format: SliceFormat,
    /// Refuse with 409 unless the served segmentation has this revision.
    pub revision: Option<u64>,
}

/// Region of one slice and its image width and height. Image rows run along
/// the slower of the two remaining axes.
pub fn slice_region(dims: Extent, axis: char, index: usize) -> Result<(Region, u32, u32), ApiError> {
    let a = match axis {
        'x' => 0,
        'y' => 1,
        'z' => 2,
        other => return Err(ApiError::BadRequest(format!("axis must be x, y or z, got {other:?}"))),
    };
    if index >= dims[a] {
        return Err(ApiError::BadRequest(format!(
            "index {index} outside 0..{} along {axis}",
            dims[a]
        )));
    }
    let mut origin = [0; 3];
    let mut extent = dims;
    origin[a] = index;
    extent[a] = 1;
    let (u, v) = match a {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    Ok((Region::new(origin, extent), dims[u] as u32, dims[v] as u32))
}

async fn slice(
    State(app): State<Arc<AppState>>,
    Path(id): Path<u64>,
    Query(q): Query<SliceQuery>,
) -> Result<Response, ApiError> {
    let s = app.session(id)?;
    let tile = blocking(move || render_slice(&s, &q).map(|t| (t, q.format))).await?;
    let (tile, format) = tile;
    let (body, mime) = match format {
        SliceFormat::Tile => (tile.encode(), "application/octet-stream"),
        SliceFormat::Png => (tile.to_png()?, "image/png"),
    };
    let mut resp = body.into_response();
    let h = resp.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static(mime));
    h.insert("x-revision", HeaderValue::from(tile.revision));
    h.insert("x-width", HeaderValue::from(tile.width));
    h.insert("x-height", HeaderValue::from(tile.height));
    Ok(resp)
}

fn render_slice(s: &Session, q: &SliceQuery) -> Result<Tile, ApiError> {
    let input = s.input();
    let g = *input.geometry();
    if q.lod >= g.levels() {
        return Err(ApiError::BadRequest(format!("lod {} outside 0..{}", q.lod, g.levels())));
    }
    let level = g.leaf_level() - q.lod;
    let (region, width, height) = slice_region(g.level_dims(level), q.axis, q.index)?;
    if q.kind == SliceKind::Intensity {
        let (revision, _) = s.labels();
        let data = fill_region(&input, level, &region, &Residency::new())?;
        return Ok(Tile {
            width,
            height,
            revision,
            data: TileData::F32(data),
        });
    }
    let seg = s
        .segmentation()
        .ok_or_else(|| ApiError::Stale("no segmentation has been computed yet".into()))?;
    if let Some(r) = q.revision {
        if r != seg.revision {
            return Err(ApiError::Stale(format!(
                "requested revision {r}, latest computed revision is {}",
                seg.revision
            )));
        }
    }
    let data = match q.kind {
        SliceKind::Probability => {
            let class = match q.class {
                Some(c) => c,
                None if seg.is_binary() => *seg.trees.keys().next().expect("one tree"),
                None => return Err(ApiError::BadRequest("class is required for multi-class probability slices".into())),
            };
            let tree = seg
                .tree(class)
                .ok_or_else(|| ApiError::NotFound(format!("unknown class {class}")))?;
            TileData::F32(tree.fill_region(level, &region)?)
        }
        SliceKind::Classmap => TileData::U32(seg.class_map(level, &region)?),
        SliceKind::Intensity => unreachable!("handled above"),
    };
    Ok(Tile {
        width,
        height,
        revision: seg.revision,
        data,
    })
}
