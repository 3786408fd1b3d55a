//! The issuer service. Issuance is holder-initiated: the holder fetches a
//! challenge, signs it with its DID key and redeems it for the pair.

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::Response;
use axum::routing::{get, post};
use axum::{middleware, Json, Router};
use serde::{Deserialize, Serialize};
use vulncred::issuer::{IssueRequest, IssuerError, IssuerService};

use crate::http::{blocking, canonical, loopback_only, ApiError, Canonical};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RevokeBody {
    pub credential_id: String,
}

impl From<IssuerError> for ApiError {
    fn from(e: IssuerError) -> Self {
        let status = match &e {
            IssuerError::Unauthorized(_) => StatusCode::UNAUTHORIZED,
            IssuerError::UnknownSubject | IssuerError::NotFound(_) => StatusCode::NOT_FOUND,
            IssuerError::Credential(_) => StatusCode::BAD_REQUEST,
            IssuerError::Registry(_) => StatusCode::BAD_GATEWAY,
            IssuerError::SelfCheck(_) | IssuerError::Journal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e)
    }
}

pub fn router(issuer: Arc<IssuerService>) -> Router {
    let admin = Router::new()
        .route("/admin/revoke", post(revoke))
        .route("/admin/issued", get(issued))
        .layer(middleware::from_fn(loopback_only));
    Router::new()
        .route("/issue/challenge", get(challenge))
        .route("/issue", post(issue))
        .merge(admin)
        .with_state(issuer)
}

async fn challenge(State(issuer): State<Arc<IssuerService>>) -> Response {
    canonical(&issuer.challenge())
}

async fn issue(
    State(issuer): State<Arc<IssuerService>>,
    Canonical(req): Canonical<IssueRequest>,
) -> Result<Response, ApiError> {
    let pair = blocking(move || issuer.issue_for(&req)).await??;
    Ok(canonical(&pair))
}

async fn revoke(State(issuer): State<Arc<IssuerService>>, Json(body): Json<RevokeBody>) -> Result<Response, ApiError> {
    let ack = blocking(move || issuer.revoke_credential(&body.credential_id)).await??;
    Ok(canonical(&ack))
}

async fn issued(State(issuer): State<Arc<IssuerService>>) -> Response {
    canonical(&issuer.issued())
}
