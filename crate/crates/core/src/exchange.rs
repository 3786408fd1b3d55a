//! Verifier/holder request-response protocol.
//!
//! Two request shapes exist. A scheme request (`scheme = FairnessForAll`,
//! no items) asks for the restricted credential as a whole and is answered
//! with a single accept or deny. An itemized request lists claims to reveal
//! and predicates to prove; the holder may grant any subset of items.
//!
//! Whatever goes wrong on the holder side, the wire answer is the same bare
//! [`PresentationResponse::denied`].

use std::collections::{BTreeSet, HashMap};
use std::sync::Mutex;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{to_canonical_bytes, Nonce};
use crate::credential::{
    FailReason, HolderSecrets, SchemaDefinition, VerifiableCredential, FAIRNESS_FOR_ALL, FINANCIAL_AUDIENCE,
};
use crate::did::{Did, KeyPair};
use crate::disclosure::{
    derive, verify_presentation, DeriveError, DisclosedFacts, Expectation, PredicateRequest, Presentation,
    ReplayCache, Selection,
};
use crate::ladder::Direction;
use crate::registry::RegistryView;
use crate::time::Timestamp;

pub const FAIRNESS_SCHEME: &str = "FairnessForAll";
/// Default lifetime of a request, long enough for a human to read and decide.
pub const REQUEST_TTL_SECS: i64 = 10 * 60;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExchangeError {
    #[error("invalid request shape: {0}")]
    InvalidShape(String),
    #[error("unknown request {0}")]
    UnknownRequest(String),
    #[error("request {0} expired")]
    RequestExpired(String),
    #[error("request {0} already answered")]
    DuplicateResponse(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ItemMode {
    Reveal,
    Predicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateSpec {
    pub op: Direction,
    pub threshold: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestItem {
    pub claim: String,
    pub mode: ItemMode,
    pub predicate: Option<PredicateSpec>,
}

impl RequestItem {
    pub fn reveal(claim: &str) -> Self {
        RequestItem { claim: claim.into(), mode: ItemMode::Reveal, predicate: None }
    }

    pub fn predicate(claim: &str, op: Direction, threshold: i64) -> Self {
        RequestItem { claim: claim.into(), mode: ItemMode::Predicate, predicate: Some(PredicateSpec { op, threshold }) }
    }

    /// "Age at least `years` on `check_date`", expressed on the birth-year
    /// ladder: `birth_year <= year(check_date) - years`. Year granularity.
    pub fn age_at_least(years: i64, check_date: NaiveDate) -> Self {
        Self::predicate("birth_year", Direction::Lte, i64::from(check_date.year()) - years)
    }

    fn well_formed(&self) -> bool {
        match self.mode {
            ItemMode::Reveal => self.predicate.is_none(),
            ItemMode::Predicate => self.predicate.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentationRequest {
    pub request_id: String,
    pub verifier: Did,
    /// Where the holder pushes its response.
    pub verifier_endpoint: Option<String>,
    pub nonce: Nonce,
    pub scheme: Option<String>,
    pub items: Vec<RequestItem>,
    pub purpose: String,
    /// Audience class the verifier belongs to, matched against a credential's
    /// intended audience.
    pub audience: Option<String>,
    pub created_at: Timestamp,
    pub expires_at: Timestamp,
}

impl PresentationRequest {
    pub fn validate_shape(&self) -> Result<(), ExchangeError> {
        match &self.scheme {
            Some(s) if s != FAIRNESS_SCHEME => Err(ExchangeError::InvalidShape(format!("unknown scheme {s:?}"))),
            Some(_) if !self.items.is_empty() => {
                Err(ExchangeError::InvalidShape("a scheme request carries no items".into()))
            }
            None if self.items.is_empty() => {
                Err(ExchangeError::InvalidShape("an itemized request needs at least one item".into()))
            }
            _ if !self.items.iter().all(RequestItem::well_formed) => {
                Err(ExchangeError::InvalidShape("predicate items need a predicate, reveal items none".into()))
            }
            _ if self.expires_at <= self.created_at => Err(ExchangeError::InvalidShape("already expired".into())),
            _ => Ok(()),
        }
    }

    pub fn is_scheme(&self) -> bool {
        self.scheme.is_some()
    }
}

/// Everything a verifier decides when opening an exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestParams {
    pub scheme: Option<String>,
    pub items: Vec<RequestItem>,
    pub purpose: String,
    pub audience: Option<String>,
    pub ttl_secs: Option<i64>,
}

impl RequestParams {
    /// Ask for the Fairness-for-All credential as a whole.
    pub fn fairness_for_all() -> Self {
        RequestParams {
            scheme: Some(FAIRNESS_SCHEME.into()),
            items: Vec::new(),
            purpose: "The bank would like access to your credentials based on the Fairness for All scheme".into(),
            audience: Some(FINANCIAL_AUDIENCE.into()),
            ttl_secs: None,
        }
    }

    pub fn itemized(items: Vec<RequestItem>, purpose: &str) -> Self {
        RequestParams {
            scheme: None,
            items,
            purpose: purpose.into(),
            audience: Some(FINANCIAL_AUDIENCE.into()),
            ttl_secs: None,
        }
    }
}

/// A well-formed request with a fresh id and nonce.
pub fn build_request(
    verifier: &Did,
    verifier_endpoint: Option<String>,
    params: RequestParams,
    now: Timestamp,
) -> Result<PresentationRequest, ExchangeError> {
    let req = PresentationRequest {
        request_id: uuid::Uuid::new_v4().to_string(),
        verifier: verifier.clone(),
        verifier_endpoint,
        nonce: Nonce::random(),
        scheme: params.scheme,
        items: params.items,
        purpose: params.purpose,
        audience: params.audience,
        created_at: now,
        expires_at: now.plus_seconds(params.ttl_secs.unwrap_or(REQUEST_TTL_SECS)),
    };
    req.validate_shape()?;
    Ok(req)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Presented,
    Denied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentationResponse {
    pub request_id: String,
    pub outcome: Outcome,
    pub presentation: Option<Presentation>,
}

impl PresentationResponse {
    /// The only denial there is: no reason, no partial data.
    pub fn denied(request_id: &str) -> Self {
        PresentationResponse { request_id: request_id.into(), outcome: Outcome::Denied, presentation: None }
    }

    pub fn presented(request_id: &str, presentation: Presentation) -> Self {
        PresentationResponse { request_id: request_id.into(), outcome: Outcome::Presented, presentation: Some(presentation) }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self).expect("responses are always encodable")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "granted", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    AcceptAll,
    Deny,
    /// Indices into the request's items.
    Partial(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentDecision {
    pub request_id: String,
    #[serde(flatten)]
    pub decision: Decision,
    pub decided_at: Timestamp,
}

/// Holder-side reasons for a denial. Never sent to the verifier.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HolderError {
    #[error("denied by holder")]
    DeniedByHolder,
    #[error("consent does not fit the request: {0}")]
    InvalidConsent(String),
    #[error("no stored credential can answer this request")]
    NoMatchingCredential,
    #[error("request expired")]
    RequestExpired,
    #[error(transparent)]
    InvalidRequest(#[from] ExchangeError),
    #[error(transparent)]
    Derive(#[from] DeriveError),
}

/// What the holder shared, for its own audit trail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedSummary {
    pub credential_id: String,
    pub revealed: Vec<String>,
    pub predicates: Vec<PredicateRequest>,
}

#[derive(Debug, Clone)]
pub struct Handled {
    pub response: PresentationResponse,
    pub local: Result<SharedSummary, HolderError>,
}

/// A credential and its secrets as held in a wallet.
pub type HeldCredential<'a> = (&'a VerifiableCredential, &'a HolderSecrets);

/// Applies the holder's decision to a request. Any failure collapses to a
/// denial on the wire; the reason is only returned locally.
pub fn handle_request(
    req: &PresentationRequest,
    wallet: &[HeldCredential<'_>],
    consent: &ConsentDecision,
    holder_keys: &KeyPair,
    now: Timestamp,
) -> Handled {
    match present(req, wallet, consent, holder_keys, now) {
        Ok((presentation, summary)) => Handled {
            response: PresentationResponse::presented(&req.request_id, presentation),
            local: Ok(summary),
        },
        Err(e) => Handled { response: PresentationResponse::denied(&req.request_id), local: Err(e) },
    }
}

/// Claims, as a selection, that a scheme or itemized request asks for given a
/// set of granted item indices.
pub fn selection_for(req: &PresentationRequest, granted: &BTreeSet<usize>) -> Selection {
    let mut selection = Selection { audience: req.audience.clone(), ..Default::default() };
    if req.is_scheme() {
        selection.reveal = SchemaDefinition::fairness_for_all().attribute_names();
        return selection;
    }
    for (i, item) in req.items.iter().enumerate() {
        if !granted.contains(&i) {
            continue;
        }
        match (item.mode, item.predicate) {
            (ItemMode::Reveal, _) => {
                selection.reveal.insert(item.claim.clone());
            }
            (ItemMode::Predicate, Some(p)) => selection.predicates.push(PredicateRequest {
                claim: item.claim.clone(),
                op: p.op,
                threshold: p.threshold,
            }),
            (ItemMode::Predicate, None) => {}
        }
    }
    selection
}

fn present(
    req: &PresentationRequest,
    wallet: &[HeldCredential<'_>],
    consent: &ConsentDecision,
    holder_keys: &KeyPair,
    now: Timestamp,
) -> Result<(Presentation, SharedSummary), HolderError> {
    req.validate_shape()?;
    if consent.request_id != req.request_id {
        return Err(HolderError::InvalidConsent("decision is for another request".into()));
    }
    if now >= req.expires_at {
        return Err(HolderError::RequestExpired);
    }
    let granted: BTreeSet<usize> = match &consent.decision {
        Decision::Deny => return Err(HolderError::DeniedByHolder),
        Decision::AcceptAll => (0..req.items.len()).collect(),
        Decision::Partial(_) if req.is_scheme() => {
            return Err(HolderError::InvalidConsent("scheme requests are all-or-nothing".into()))
        }
        Decision::Partial(idx) => {
            if let Some(bad) = idx.iter().find(|&&i| i >= req.items.len()) {
                return Err(HolderError::InvalidConsent(format!("no item {bad}")));
            }
            if idx.is_empty() {
                return Err(HolderError::DeniedByHolder);
            }
            idx.iter().copied().collect()
        }
    };
    let selection = selection_for(req, &granted);

    let needed: BTreeSet<&str> = selection
        .reveal
        .iter()
        .map(String::as_str)
        .chain(selection.predicates.iter().map(|p| p.claim.as_str()))
        .collect();
    let audience_ok = |vc: &VerifiableCredential| match &vc.intended_audience {
        None => true,
        Some(a) => selection.audience.as_ref() == Some(a),
    };
    let candidates = wallet.iter().filter(|(vc, secrets)| {
        now < vc.expires_at
            && (!req.is_scheme() || vc.schema == FAIRNESS_FOR_ALL)
            && needed.iter().all(|n| secrets.claim(n).is_some())
    });
    // Prefer a credential the audience rule admits, then the newest, then the
    // one carrying fewest claims. Without an admissible one, derivation reports
    // the audience violation rather than a generic miss.
    let rank = |(vc, secrets): &&HeldCredential<'_>| (vc.issued_at, std::cmp::Reverse(secrets.claims.len()));
    let (vc, secrets) = candidates
        .clone()
        .filter(|(vc, _)| audience_ok(vc))
        .max_by_key(rank)
        .or_else(|| candidates.max_by_key(rank))
        .ok_or(HolderError::NoMatchingCredential)?;

    let presentation = derive(vc, secrets, &selection, &req.verifier, req.nonce, holder_keys, now)?;
    let summary = SharedSummary {
        credential_id: vc.credential_id.clone(),
        revealed: selection.reveal.iter().cloned().collect(),
        predicates: selection.predicates.clone(),
    };
    Ok((presentation, summary))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerificationResult {
    Verified { facts: DisclosedFacts },
    Rejected { reason: FailReason },
    Denied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub request_id: String,
    pub customer_ref: Option<String>,
    pub received_at: Timestamp,
    pub result: VerificationResult,
}

impl VerificationOutcome {
    pub fn facts(&self) -> Option<&DisclosedFacts> {
        match &self.result {
            VerificationResult::Verified { facts } => Some(facts),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("transport: {0}")]
pub struct TransportError(pub String);

/// Verifier to holder: pushes a request to the holder's protocol endpoint.
pub trait HolderTransport: Send + Sync {
    fn deliver(&self, endpoint: &str, request: &PresentationRequest) -> Result<(), TransportError>;
}

/// Holder to verifier: pushes a response to the verifier's endpoint.
pub trait VerifierTransport: Send + Sync {
    fn respond(&self, endpoint: &str, response: &PresentationResponse) -> Result<(), TransportError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExchangeState {
    Issued,
    Responded,
    Closed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PendingExchange {
    pub request: PresentationRequest,
    pub customer_ref: Option<String>,
    pub state: ExchangeState,
    pub outcome: Option<VerificationOutcome>,
}

/// Verifier-side bookkeeping: outstanding requests and the nonce replay cache.
#[derive(Debug, Default)]
pub struct VerifierState {
    exchanges: Mutex<HashMap<String, PendingExchange>>,
    replay: ReplayCache,
}

impl VerifierState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, request: PresentationRequest, customer_ref: Option<String>) {
        let mut map = self.exchanges.lock().expect("verifier state poisoned");
        map.insert(
            request.request_id.clone(),
            PendingExchange { request, customer_ref, state: ExchangeState::Issued, outcome: None },
        );
    }

    pub fn exchange(&self, request_id: &str) -> Option<PendingExchange> {
        self.exchanges.lock().expect("verifier state poisoned").get(request_id).cloned()
    }

    pub fn exchanges(&self) -> Vec<PendingExchange> {
        self.exchanges.lock().expect("verifier state poisoned").values().cloned().collect()
    }

    /// Drops every exchange (and its outcome) that belongs to `customer_ref`.
    pub fn forget_customer(&self, customer_ref: &str) -> usize {
        let mut map = self.exchanges.lock().expect("verifier state poisoned");
        let before = map.len();
        map.retain(|_, e| e.customer_ref.as_deref() != Some(customer_ref));
        before - map.len()
    }
}

/// Verifies and records a holder's response.
pub fn receive_response(
    resp: &PresentationResponse,
    state: &VerifierState,
    registry: &dyn RegistryView,
    now: Timestamp,
) -> Result<VerificationOutcome, ExchangeError> {
    match (resp.outcome, &resp.presentation) {
        (Outcome::Presented, None) | (Outcome::Denied, Some(_)) => {
            return Err(ExchangeError::Malformed("outcome and presentation disagree".into()))
        }
        _ => {}
    }

    // Transition Issued -> Responded atomically; later arrivals see the new state.
    let (request, customer_ref, first) = {
        let mut map = state.exchanges.lock().expect("verifier state poisoned");
        let ex = map
            .get_mut(&resp.request_id)
            .ok_or_else(|| ExchangeError::UnknownRequest(resp.request_id.clone()))?;
        if ex.state == ExchangeState::Issued && now >= ex.request.expires_at {
            ex.state = ExchangeState::Closed;
            return Err(ExchangeError::RequestExpired(resp.request_id.clone()));
        }
        let first = ex.state == ExchangeState::Issued;
        if first {
            ex.state = ExchangeState::Responded;
        }
        (ex.request.clone(), ex.customer_ref.clone(), first)
    };

    let outcome = |result| VerificationOutcome {
        request_id: request.request_id.clone(),
        customer_ref: customer_ref.clone(),
        received_at: now,
        result,
    };

    let Some(presentation) = &resp.presentation else {
        if !first {
            return Err(ExchangeError::DuplicateResponse(resp.request_id.clone()));
        }
        // Burn the nonce so a late presentation for this request cannot land.
        let _ = state.replay.consume(request.nonce, now);
        let out = outcome(VerificationResult::Denied);
        close(state, &request.request_id, &out);
        return Ok(out);
    };

    let expect = Expectation { verifier: &request.verifier, nonce: request.nonce, replay: &state.replay };
    let verdict = verify_presentation(presentation, registry, &expect, now)
        .and_then(|facts| conforms(&request, presentation).map(|_| facts));

    if !first {
        // A second answer to a closed exchange never counts, even if the
        // replay window has lapsed.
        let reason = match verdict {
            Ok(_) => FailReason::NonceReplayed,
            Err(r) => r,
        };
        return Ok(outcome(VerificationResult::Rejected { reason }));
    }

    let out = match verdict {
        Ok(facts) => outcome(VerificationResult::Verified { facts }),
        Err(reason) => {
            let _ = state.replay.consume(request.nonce, now);
            outcome(VerificationResult::Rejected { reason })
        }
    };
    close(state, &request.request_id, &out);
    Ok(out)
}

fn close(state: &VerifierState, request_id: &str, outcome: &VerificationOutcome) {
    let mut map = state.exchanges.lock().expect("verifier state poisoned");
    if let Some(ex) = map.get_mut(request_id) {
        ex.state = ExchangeState::Closed;
        ex.outcome = Some(outcome.clone());
    }
}

/// A presentation may only contain what was asked for (plus group members
/// forced in by a requested claim).
fn conforms(req: &PresentationRequest, p: &Presentation) -> Result<(), FailReason> {
    let revealed = p.revealed_names();
    if req.is_scheme() {
        let expected = SchemaDefinition::fairness_for_all().attribute_names();
        if p.credential.schema != FAIRNESS_FOR_ALL || revealed != expected || !p.predicates.is_empty() {
            return Err(FailReason::NotRequested);
        }
        return Ok(());
    }
    let mut allowed: BTreeSet<String> = BTreeSet::new();
    for item in req.items.iter().filter(|i| i.mode == ItemMode::Reveal) {
        allowed.insert(item.claim.clone());
        if let Some(g) = p.credential.group_of(&item.claim) {
            allowed.extend(g.members.iter().cloned());
        }
    }
    if !revealed.is_subset(&allowed) {
        return Err(FailReason::NotRequested);
    }
    for proof in &p.predicates {
        let asked = req.items.iter().any(|i| {
            i.claim == proof.claim_name
                && i.predicate == Some(PredicateSpec { op: proof.op, threshold: proof.threshold })
        });
        if !asked {
            return Err(FailReason::NotRequested);
        }
    }
    Ok(())
}
