//! The holder agent. `/present/request` is the public protocol endpoint;
//! the consent API is served to loopback peers only.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::Response;
use axum::routing::{get, post};
use axum::{middleware, Json, Router};
use serde::{Deserialize, Serialize};
use vulncred::canonical::from_canonical_bytes;
use vulncred::did::Did;
use vulncred::exchange::{ConsentDecision, Decision, PresentationRequest, VerifierTransport};
use vulncred::issuer::{IssueChallenge, IssuedPair};
use vulncred::registry::RegistryHandle;
use vulncred::time::Clock;
use vulncred::wallet::{AuditEntry, DecideOutcome, EntryView, InboxView, StoreReport, Wallet, WalletError};

use crate::client::{join, Http};
use crate::http::{blocking, canonical, loopback_only, ApiError, Canonical};

#[derive(Clone)]
pub struct WalletAgent {
    pub wallet: Arc<Wallet>,
    pub registry: Arc<dyn RegistryHandle>,
    pub transport: Arc<dyn VerifierTransport>,
    pub clock: Arc<dyn Clock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObtainBody {
    pub issuer_url: String,
    pub nhs_number: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Queued {
    pub request_id: String,
    pub state: String,
}

impl From<WalletError> for ApiError {
    fn from(e: WalletError) -> Self {
        let status = match &e {
            WalletError::UnknownRequest(_) => StatusCode::NOT_FOUND,
            WalletError::DuplicateRequest(_) | WalletError::AlreadyDecided(_) | WalletError::AlreadyExists(_) => {
                StatusCode::CONFLICT
            }
            WalletError::RequestExpired(_) => StatusCode::GONE,
            WalletError::InvalidConsent(_) | WalletError::InvalidRequest(_) | WalletError::RootMismatch => {
                StatusCode::BAD_REQUEST
            }
            WalletError::Delivery(_) | WalletError::RegistryUnreachable(_) => StatusCode::BAD_GATEWAY,
            WalletError::WrongPassphrase | WalletError::Corrupt(_) | WalletError::Io(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        ApiError::new(status, e)
    }
}

pub fn router(agent: WalletAgent) -> Router {
    let local = Router::new()
        .route("/wallet", get(wallet_view))
        .route("/wallet/did", get(holder_did))
        .route("/wallet/refresh", post(refresh))
        .route("/wallet/obtain", post(obtain))
        .route("/inbox", get(inbox))
        .route("/inbox/{id}/decide", post(decide))
        .route("/audit", get(audit))
        .layer(middleware::from_fn(loopback_only));
    Router::new().route("/present/request", post(present_request)).merge(local).with_state(agent)
}

/// Auto-denies expired pending requests once a second, so silence never
/// holds a verifier's nonce open.
pub fn spawn_expiry(agent: WalletAgent) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(1));
        loop {
            tick.tick().await;
            let a = agent.clone();
            match blocking(move || a.wallet.expire_pending(a.clock.now(), &*a.transport)).await {
                Ok(Ok(0)) => {}
                Ok(Ok(n)) => log::info!("auto-denied {n} expired request(s)"),
                Ok(Err(e)) => log::warn!("expiry sweep: {e}"),
                Err(e) => log::warn!("expiry sweep: {}", e.message),
            }
        }
    })
}

async fn present_request(
    State(agent): State<WalletAgent>,
    Canonical(req): Canonical<PresentationRequest>,
) -> Result<Response, ApiError> {
    let now = agent.clock.now();
    if now >= req.expires_at {
        return Err(ApiError::new(StatusCode::GONE, format!("request {} expired", req.request_id)));
    }
    let request_id = req.request_id.clone();
    log::info!("request {request_id} from {}: {}", req.verifier, req.purpose);
    blocking(move || agent.wallet.receive_request(req, now)).await??;
    Ok(canonical(&Queued { request_id, state: "PENDING".into() }))
}

async fn wallet_view(State(agent): State<WalletAgent>) -> Json<Vec<EntryView>> {
    Json(agent.wallet.wallet_view())
}

async fn holder_did(State(agent): State<WalletAgent>) -> Json<Did> {
    Json(agent.wallet.holder_did())
}

async fn inbox(State(agent): State<WalletAgent>) -> Json<Vec<InboxView>> {
    Json(agent.wallet.inbox_list())
}

async fn audit(State(agent): State<WalletAgent>) -> Json<Vec<AuditEntry>> {
    Json(agent.wallet.audit())
}

async fn decide(
    State(agent): State<WalletAgent>,
    Path(request_id): Path<String>,
    Json(decision): Json<Decision>,
) -> Result<Json<DecideOutcome>, ApiError> {
    let consent = ConsentDecision { request_id, decision, decided_at: agent.clock.now() };
    let outcome = blocking(move || agent.wallet.inbox_decide(consent, &*agent.transport)).await??;
    Ok(Json(outcome))
}

async fn refresh(State(agent): State<WalletAgent>) -> Result<Json<Vec<EntryView>>, ApiError> {
    let entries = blocking(move || agent.wallet.status_refresh(&*agent.registry, agent.clock.now())).await??;
    Ok(Json(entries))
}

/// Runs challenge issuance against an issuer and stores the pair.
async fn obtain(State(agent): State<WalletAgent>, Json(body): Json<ObtainBody>) -> Result<Json<Vec<StoreReport>>, ApiError> {
    let reports = blocking(move || obtain_pair(&agent, &body)).await??;
    Ok(Json(reports))
}

fn obtain_pair(agent: &WalletAgent, body: &ObtainBody) -> Result<Vec<StoreReport>, ApiError> {
    let http = Http::default();
    let gateway = |m: String| ApiError::new(StatusCode::BAD_GATEWAY, m);
    agent.wallet.ensure_anchored(&*agent.registry)?;
    let reply = http.get(&join(&body.issuer_url, "/issue/challenge")).map_err(gateway)?;
    if !reply.ok() {
        return Err(gateway(format!("challenge: {} {}", reply.status, reply.error_message())));
    }
    let challenge: IssueChallenge = from_canonical_bytes(&reply.body).map_err(|e| gateway(e.to_string()))?;
    let request = agent.wallet.sign_issue_request(&challenge, &body.nhs_number);
    let reply = http.post_canonical(&join(&body.issuer_url, "/issue"), &request).map_err(gateway)?;
    if !reply.ok() {
        let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::BAD_GATEWAY);
        return Err(ApiError::new(status, format!("issuer: {}", reply.error_message())));
    }
    let pair: IssuedPair = from_canonical_bytes(&reply.body).map_err(|e| gateway(e.to_string()))?;
    if pair.full.credential.issuer != challenge.issuer || pair.fairness.credential.issuer != challenge.issuer {
        return Err(gateway("issuer answered with credentials from another DID".into()));
    }
    Ok(agent.wallet.store_pair(pair, agent.clock.now())?)
}
