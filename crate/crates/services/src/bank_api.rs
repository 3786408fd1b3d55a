//! The bank verifier service. `/present/response` is the public protocol
//! endpoint; everything else is staff tooling served on loopback only.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::Response;
use axum::routing::{get, post};
use axum::{middleware, Json, Router};
use serde::{Deserialize, Serialize};
use vulncred::bank::{BankError, BankService, CareFlag, ReviewDecision, ReviewItem, Tombstone};
use vulncred::credential::FailReason;
use vulncred::did::{self, Did};
use vulncred::exchange::{ExchangeError, HolderTransport, PresentationResponse, RequestParams, VerificationResult};
use vulncred::registry::{with_view, RegistryHandle};
use vulncred::Timestamp;

use crate::http::{blocking, canonical, loopback_only, ApiError, Canonical};

#[derive(Clone)]
pub struct BankApi {
    pub bank: Arc<BankService>,
    pub registry: Arc<dyn RegistryHandle>,
    pub transport: Arc<dyn HolderTransport>,
}

/// Body of `POST /exchange/open`. The holder is reached through the service
/// endpoint of `holder_did`, an explicit `holder_endpoint`, or the endpoint
/// recorded for the customer earlier. Without `params` the request is the
/// Fairness-for-All scheme.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpenExchange {
    pub customer_ref: String,
    #[serde(default)]
    pub holder_did: Option<Did>,
    #[serde(default)]
    pub holder_endpoint: Option<String>,
    #[serde(default)]
    pub params: Option<RequestParams>,
}

/// What the holder learns about its response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseAck {
    pub request_id: String,
    pub result: String,
    pub reason: Option<FailReason>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlagsView {
    pub customer_ref: String,
    pub care_support: Vec<CareFlag>,
    pub erased: Vec<Tombstone>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviewAct {
    pub customer_ref: String,
    pub flag_id: String,
    pub decision: ReviewDecision,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReviewBody {
    /// Review instant; the service clock when absent.
    #[serde(default)]
    pub now: Option<Timestamp>,
    #[serde(default)]
    pub actions: Vec<ReviewAct>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviewReport {
    pub now: Timestamp,
    pub applied: Vec<CareFlag>,
    pub due: Vec<ReviewItem>,
}

impl From<BankError> for ApiError {
    fn from(e: BankError) -> Self {
        let status = match &e {
            BankError::UnknownCustomer(_) | BankError::UnknownFlag(_) => StatusCode::NOT_FOUND,
            BankError::EndpointUnreachable(_) => StatusCode::BAD_GATEWAY,
            BankError::InvalidAction(_) => StatusCode::BAD_REQUEST,
            BankError::Exchange(x) => exchange_status(x),
            BankError::Registry(_) => StatusCode::BAD_GATEWAY,
            BankError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e)
    }
}

fn exchange_status(e: &ExchangeError) -> StatusCode {
    match e {
        ExchangeError::InvalidShape(_) | ExchangeError::Malformed(_) => StatusCode::BAD_REQUEST,
        ExchangeError::UnknownRequest(_) => StatusCode::NOT_FOUND,
        ExchangeError::RequestExpired(_) => StatusCode::GONE,
        ExchangeError::DuplicateResponse(_) => StatusCode::CONFLICT,
    }
}

pub fn router(api: BankApi) -> Router {
    let staff = Router::new()
        .route("/exchange/open", post(open))
        .route("/flags/{customer}", get(flags))
        .route("/flags/review", post(review))
        .route("/forget/{customer}", post(forget))
        .layer(middleware::from_fn(loopback_only));
    Router::new().route("/present/response", post(response)).merge(staff).with_state(api)
}

async fn open(State(api): State<BankApi>, Json(body): Json<OpenExchange>) -> Result<Response, ApiError> {
    let request = blocking(move || -> Result<_, ApiError> {
        let endpoint = match (&body.holder_endpoint, &body.holder_did) {
            (Some(e), _) => Some(e.clone()),
            (None, Some(holder)) => {
                let doc = with_view(&*api.registry, |v| did::resolve(holder, v))?
                    .map_err(|e| ApiError::bad_request(format!("holder DID: {e}")))?;
                Some(doc.service_endpoint.ok_or_else(|| ApiError::bad_request("holder DID names no endpoint"))?)
            }
            (None, None) => None,
        };
        api.bank.register_customer(&body.customer_ref, endpoint)?;
        let params = body.params.unwrap_or_else(RequestParams::fairness_for_all);
        Ok(api.bank.open_exchange(&body.customer_ref, params, &*api.transport)?)
    })
    .await??;
    Ok(canonical(&request))
}

async fn response(State(api): State<BankApi>, Canonical(resp): Canonical<PresentationResponse>) -> Result<Response, ApiError> {
    let outcome = blocking(move || api.bank.receive(&resp)).await??;
    let (result, reason) = match &outcome.result {
        VerificationResult::Verified { .. } => ("VERIFIED", None),
        VerificationResult::Rejected { reason } => ("REJECTED", Some(*reason)),
        VerificationResult::Denied => ("DENIED", None),
    };
    log::info!("response to {}: {result} {reason:?}", outcome.request_id);
    Ok(canonical(&ResponseAck { request_id: outcome.request_id, result: result.into(), reason }))
}

async fn flags(State(api): State<BankApi>, Path(customer): Path<String>) -> Result<Json<FlagsView>, ApiError> {
    let (care_support, erased) = api.bank.flags(&customer)?;
    Ok(Json(FlagsView { customer_ref: customer, care_support, erased }))
}

async fn review(State(api): State<BankApi>, body: Option<Json<ReviewBody>>) -> Result<Json<ReviewReport>, ApiError> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let report = blocking(move || -> Result<_, ApiError> {
        let mut applied = Vec::new();
        for a in &body.actions {
            applied.push(api.bank.act(&a.customer_ref, &a.flag_id, a.decision)?);
        }
        let now = body.now.unwrap_or_else(|| api.bank.clock().now());
        Ok(ReviewReport { now, applied, due: api.bank.run_review(now) })
    })
    .await??;
    Ok(Json(report))
}

async fn forget(State(api): State<BankApi>, Path(customer): Path<String>) -> Result<Response, ApiError> {
    let report = blocking(move || api.bank.forget_customer(&customer)).await??;
    Ok(canonical(&report))
}
