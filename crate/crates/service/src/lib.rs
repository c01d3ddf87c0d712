//! HTTP API for the evaluate-edit-compute loop.
//!
//! | method | path                      | body / query                                        |
//! |--------|---------------------------|-----------------------------------------------------|
//! | POST   | `/sessions`               | `{path, brick_side?, config?}`                      |
//! | GET    | `/sessions/{id}`          |                                                     |
//! | POST   | `/sessions/{id}/labels`   | `{ops: [{op: "add", label} \| {op: "remove", id}]}` |
//! | POST   | `/sessions/{id}/compute`  | `{mode: "auto" \| "full"}`                          |
//! | POST   | `/sessions/{id}/cancel`   |                                                     |
//! | GET    | `/sessions/{id}/status`   |                                                     |
//! | GET    | `/sessions/{id}/slice`    | `kind, class?, axis, index, lod?, format?, revision?` |
//!
//! Slices are HRT1 tiles ([`tile`]) or PNG, with the revision they reflect in
//! the `x-revision` header. Probability and class-map slices come from the
//! last completed segmentation; a `revision` query that does not match it is
//! refused with 409. Errors are JSON `{error, message}`.

mod api;
mod error;
mod session;
pub mod tile;

pub use api::{
    router, slice_region, AppState, ComputeRequest, ComputeResponse, LabelsRequest, LabelsResponse, OpenRequest,
    ServiceConfig, SessionView, SliceFormat, SliceKind, SliceQuery,
};
pub use error::ApiError;
pub use session::{open_volume, ErrorView, JobState, ProgressView, RunSummary, Session, StatusView};

/// Serves the API on `addr` until the process ends.
pub async fn serve(addr: std::net::SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await
}
