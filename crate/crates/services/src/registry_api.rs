//! The registry service.

use std::str::FromStr;

use axum::extract::{Path, Query, State};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use vulncred::did::{Did, DidAnchor, DidError};
use vulncred::registry::{SharedRegistry, StatusUpdate};

use crate::http::{blocking, canonical, ApiError, Canonical};

pub fn router(registry: SharedRegistry) -> Router {
    Router::new()
        .route("/anchor", post(anchor))
        .route("/status", post(status_update))
        .route("/resolve/{did}", get(resolve))
        .route("/status/{issuer}/{list_id}", get(status_list))
        .route("/chain", get(chain))
        .with_state(registry)
}

async fn anchor(State(reg): State<SharedRegistry>, Canonical(a): Canonical<DidAnchor>) -> Result<Response, ApiError> {
    let block = blocking(move || reg.inner().write().expect("registry lock poisoned").anchor(&a)).await??;
    log::info!("block {}: DID anchor", block.index);
    Ok(canonical(&block))
}

async fn status_update(
    State(reg): State<SharedRegistry>,
    Canonical(u): Canonical<StatusUpdate>,
) -> Result<Response, ApiError> {
    let block = blocking(move || reg.inner().write().expect("registry lock poisoned").publish_status(&u)).await??;
    log::info!("block {}: status update", block.index);
    Ok(canonical(&block))
}

async fn resolve(State(reg): State<SharedRegistry>, Path(did): Path<String>) -> Result<Response, ApiError> {
    let did = Did::from_str(&did).map_err(ApiError::bad_request)?;
    let doc = reg.inner().read().expect("registry lock poisoned").resolve(&did);
    match doc {
        Ok(doc) => Ok(canonical(&doc)),
        Err(e @ DidError::NotFound(_)) => Err(ApiError::not_found(e)),
        Err(e @ DidError::Malformed(_)) => Err(ApiError::bad_request(e)),
        Err(e) => Err(ApiError::new(axum::http::StatusCode::CONFLICT, e)),
    }
}

async fn status_list(
    State(reg): State<SharedRegistry>,
    Path((issuer, list_id)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let issuer = Did::from_str(&issuer).map_err(ApiError::bad_request)?;
    let list = reg.inner().read().expect("registry lock poisoned").latest_status(&issuer, &list_id)?;
    Ok(canonical(&list))
}

#[derive(Deserialize)]
struct ChainQuery {
    from: Option<u64>,
}

async fn chain(State(reg): State<SharedRegistry>, Query(q): Query<ChainQuery>) -> Response {
    let guard = reg.inner().read().expect("registry lock poisoned");
    canonical(&guard.blocks_from(q.from.unwrap_or(0)))
}
