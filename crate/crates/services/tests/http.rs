mod support;

use std::net::SocketAddr;

use axum::body::Body;
use axum::extract::ConnectInfo;
use axum::http::{Request, StatusCode};
use serde_json::json;
use tower::ServiceExt;

use support::{date, record, Stack, NHS};
use vulncred::canonical::{to_canonical_bytes, Nonce};
use vulncred::did::{generate_did, DidAnchor, KeyPair};
use vulncred::exchange::{Decision, PresentationResponse};
use vulncred::issuer::IssueRequest;
use vulncred::registry::{with_view, Registry, RegistryError, RegistryHandle, SharedRegistry, StatusList, StatusUpdate};
use vulncred::Timestamp;
use vulncred_services::client::{join, RemoteRegistry};
use vulncred_services::{issuer_api, registry_api};

fn t0() -> Timestamp {
    Timestamp::ymd_hms(2021, 6, 1, 9, 0, 0).unwrap()
}

#[test]
fn registry_status_codes() {
    let stack = Stack::new(t0());
    let url = |p: &str| join(&stack.registry_url, p);

    let (did, doc, keys) = generate_did(None);
    let anchor = DidAnchor::new(doc, &keys);
    let pretty = serde_json::to_vec_pretty(&anchor).unwrap();
    assert_eq!(stack.http.post_bytes(&url("/anchor"), &pretty).unwrap().status, 400);
    assert_eq!(stack.http.post_bytes(&url("/anchor"), b"{").unwrap().status, 400);
    assert_eq!(stack.get(&stack.registry_url, &format!("/resolve/{did}")).status, 404);
    assert_eq!(stack.get(&stack.registry_url, "/resolve/did:web:example.org").status, 400);

    let forged = DidAnchor::new(anchor.document.clone(), &KeyPair::generate());
    assert_eq!(stack.http.post_canonical(&url("/anchor"), &forged).unwrap().status, 403);
    assert_eq!(stack.http.post_canonical(&url("/anchor"), &anchor).unwrap().status, 200);
    assert_eq!(stack.get(&stack.registry_url, &format!("/resolve/{did}")).status, 200);

    let mut list = StatusList::fresh(did.clone(), "L0");
    list.version = 1;
    assert_eq!(stack.http.post_canonical(&url("/status"), &StatusUpdate::new(list.clone(), &keys)).unwrap().status, 400);
    list.version = 0;
    assert_eq!(stack.http.post_canonical(&url("/status"), &StatusUpdate::new(list.clone(), &keys)).unwrap().status, 200);
    list.bits.set(3);
    list.version = 1;
    assert_eq!(stack.http.post_canonical(&url("/status"), &StatusUpdate::new(list.clone(), &keys)).unwrap().status, 200);
    assert_eq!(stack.get(&stack.registry_url, &format!("/status/{did}/L0")).status, 200);
    assert_eq!(stack.get(&stack.registry_url, &format!("/status/{did}/L9")).status, 404);
    let mut shrunk = StatusList::fresh(did.clone(), "L0");
    shrunk.version = 2;
    assert_eq!(stack.http.post_canonical(&url("/status"), &StatusUpdate::new(shrunk, &keys)).unwrap().status, 409);
    let other = KeyPair::generate();
    list.version = 2;
    assert_eq!(stack.http.post_canonical(&url("/status"), &StatusUpdate::new(list, &other)).unwrap().status, 403);

    let huge = vec![b' '; (1 << 20) + 1];
    assert_eq!(stack.http.post_bytes(&url("/anchor"), &huge).unwrap().status, 413);
}

#[test]
fn chain_endpoint_pages_from_an_index() {
    let stack = Stack::new(t0());
    let all: Vec<serde_json::Value> = stack.get(&stack.registry_url, "/chain").json().unwrap();
    assert!(all.len() >= 2, "issuer and bank are anchored");
    let tail: Vec<serde_json::Value> = stack.get(&stack.registry_url, "/chain?from=1").json().unwrap();
    assert_eq!(tail.len(), all.len() - 1);
    assert_eq!(tail[0], all[1]);
    let past: Vec<serde_json::Value> = stack.get(&stack.registry_url, "/chain?from=999").json().unwrap();
    assert!(past.is_empty());
}

#[test]
fn remote_mirror_refuses_a_rewritten_history() {
    let stack = Stack::new(t0());
    let remote = RemoteRegistry::new(&stack.registry_url);
    let bank = stack.bank.did().clone();
    assert_eq!(with_view(&remote, |v| v.did_history(&bank).len()).unwrap(), 1);
    let seen = stack.registry.inner().read().unwrap().len();

    let mut rewritten = Registry::in_memory();
    let mut last = None;
    for _ in 0..seen + 1 {
        let (did, doc, keys) = generate_did(None);
        rewritten.anchor(&DidAnchor::new(doc, &keys)).unwrap();
        last = Some(did);
    }
    *stack.registry.inner().write().unwrap() = rewritten;
    assert!(matches!(with_view(&remote, |_| ()), Err(RegistryError::Corrupt(_))));
    let fresh = RemoteRegistry::new(&stack.registry_url);
    assert_eq!(with_view(&fresh, |v| v.did_history(&bank).len()).unwrap(), 0);
    assert_eq!(with_view(&fresh, |v| v.did_history(last.as_ref().unwrap()).len()).unwrap(), 1);
}

#[test]
fn remote_submit_maps_registry_refusals() {
    let stack = Stack::new(t0());
    let remote = RemoteRegistry::new(&stack.registry_url);
    let handle: &dyn RegistryHandle = &remote;
    let (did, doc, keys) = generate_did(None);
    let forged = DidAnchor::new(doc.clone(), &KeyPair::generate());
    assert!(matches!(handle.anchor(&forged), Err(RegistryError::Unauthorized(_))));
    handle.anchor(&DidAnchor::new(doc, &keys)).unwrap();
    let mut list = StatusList::fresh(did.clone(), "L0");
    list.version = 1;
    assert!(matches!(handle.publish_status(&StatusUpdate::new(list.clone(), &keys)), Err(RegistryError::MalformedPayload(_))));
    list.version = 0;
    handle.publish_status(&StatusUpdate::new(list.clone(), &keys)).unwrap();
    list.bits.set(1);
    list.version = 1;
    handle.publish_status(&StatusUpdate::new(list, &keys)).unwrap();
    let mut shrunk = StatusList::fresh(did, "L0");
    shrunk.version = 2;
    assert!(matches!(handle.publish_status(&StatusUpdate::new(shrunk, &keys)), Err(RegistryError::NonMonotoneStatus)));
    let unreachable = RemoteRegistry::new("http://127.0.0.1:9");
    assert!(matches!(with_view(&unreachable, |_| ()), Err(RegistryError::Unreachable(_))));
}

#[test]
fn issuer_status_codes() {
    let stack = Stack::new(t0());
    let url = |p: &str| join(&stack.issuer_url, p);
    let (subject, _, keys) = generate_did(None);
    let unknown_challenge = IssueRequest::sign(stack.issuer.did(), &subject, NHS[0], Nonce::random(), &keys);
    assert_eq!(stack.http.post_canonical(&url("/issue"), &unknown_challenge).unwrap().status, 401);
    assert_eq!(stack.http.post_json(&url("/issue"), &json!({ "subject": 1 })).unwrap().status, 400);

    let holder = stack.enrolled("h", |did| record(NHS[1], date(1990, 1, 1), [true, false, false, false], 1, "d", did));
    let issued: Vec<serde_json::Value> = stack.get(&stack.issuer_url, "/admin/issued").json().unwrap();
    assert_eq!(issued.len(), 2);
    assert!(issued.iter().all(|s| s["subject"] == holder.did.to_string()));
    let revoke = |id: &str| stack.post(&stack.issuer_url, "/admin/revoke", &json!({ "credential_id": id }));
    assert_eq!(revoke("urn:uuid:nope").status, 404);
    let id = issued[0]["credential_id"].as_str().unwrap();
    assert_eq!(revoke(id).status, 200);
    assert_eq!(revoke(id).status, 200, "revoking twice is harmless");

    // A record the issuer does not hold.
    let obtain = stack.post(&holder.url, "/wallet/obtain", &json!({ "issuer_url": stack.issuer_url, "nhs_number": NHS[2] }));
    assert_eq!(obtain.status, 404);
}

#[test]
fn bank_protocol_status_codes() {
    let stack = Stack::new(t0());
    let holder = stack.enrolled("h", |did| record(NHS[3], date(1990, 1, 1), [true, false, false, false], 1, "d", did));
    let respond = |resp: &PresentationResponse| {
        stack.http.post_canonical(&join(&stack.bank_url, "/present/response"), resp).unwrap().status
    };
    assert_eq!(respond(&PresentationResponse::denied("no-such-request")), 404);
    let pretty = serde_json::to_vec_pretty(&PresentationResponse::denied("x")).unwrap();
    assert_eq!(stack.http.post_bytes(&join(&stack.bank_url, "/present/response"), &pretty).unwrap().status, 400);

    let req = stack.open("c", &holder, None);
    assert_eq!(respond(&PresentationResponse::denied(&req.request_id)), 200);
    assert_eq!(respond(&PresentationResponse::denied(&req.request_id)), 409);

    let req = stack.open("c", &holder, None);
    stack.clock.advance(601);
    assert_eq!(respond(&PresentationResponse::denied(&req.request_id)), 410);

    assert_eq!(stack.get(&stack.bank_url, "/flags/nobody").status, 404);
    let open = stack.post(&stack.bank_url, "/exchange/open", &json!({ "customer_ref": "d", "holder_endpoint": "http://127.0.0.1:9/x" }));
    assert_eq!(open.status, 502);
    let (stranger, _, _) = generate_did(None);
    let open = stack.post(&stack.bank_url, "/exchange/open", &json!({ "customer_ref": "d", "holder_did": stranger }));
    assert_eq!(open.status, 400);
}

#[test]
fn holder_protocol_status_codes() {
    let stack = Stack::new(t0());
    let holder = stack.enrolled("h", |did| record(NHS[4], date(1990, 1, 1), [true, false, false, false], 1, "d", did));
    let req = stack.open("c", &holder, None);
    let url = join(&holder.url, "/present/request");

    assert_eq!(stack.http.post_canonical(&url, &req).unwrap().status, 409, "already queued");
    let mut stale = req.clone();
    stale.request_id = "stale".into();
    stale.expires_at = stack.now().plus_seconds(-1);
    assert_eq!(stack.http.post_canonical(&url, &stale).unwrap().status, 410);
    let mut bytes = to_canonical_bytes(&req).unwrap();
    bytes.push(b'\n');
    assert_eq!(stack.http.post_bytes(&url, &bytes).unwrap().status, 400);

    assert_eq!(stack.decide(&holder, "unknown", &Decision::AcceptAll).status, 404);
    assert_eq!(stack.decide(&holder, &req.request_id, &Decision::Partial(vec![99])).status, 400);
    assert_eq!(stack.decide(&holder, &req.request_id, &Decision::Deny).status, 200);
    assert_eq!(stack.decide(&holder, &req.request_id, &Decision::AcceptAll).status, 409);

    let req = stack.open("c", &holder, None);
    stack.clock.advance(601);
    assert_eq!(stack.decide(&holder, &req.request_id, &Decision::AcceptAll).status, 410);
    let inbox: Vec<serde_json::Value> = stack.get(&holder.url, "/inbox").json().unwrap();
    let states: Vec<&str> = inbox.iter().map(|i| i["state"].as_str().unwrap()).collect();
    assert_eq!(states, ["DENIED", "AUTO_DENIED"]);
    let audit: Vec<serde_json::Value> = stack.get(&holder.url, "/audit").json().unwrap();
    assert_eq!(audit.len(), 2);
    assert!(audit.iter().all(|a| a["outcome"] == "DENIED"));
}

async fn status_from(router: axum::Router, peer: &str, method: &str, path: &str) -> StatusCode {
    let mut req = Request::builder().method(method).uri(path).body(Body::empty()).unwrap();
    req.extensions_mut().insert(ConnectInfo(peer.parse::<SocketAddr>().unwrap()));
    router.oneshot(req).await.unwrap().status()
}

#[test]
fn staff_and_consent_routes_are_loopback_only() {
    let stack = Stack::new(t0());
    let issuer = issuer_api::router(stack.issuer.clone());
    let registry = registry_api::router(SharedRegistry::new(Registry::in_memory()));
    stack.rt.block_on(async {
        assert_eq!(status_from(issuer.clone(), "203.0.113.7:5000", "GET", "/admin/issued").await, StatusCode::FORBIDDEN);
        assert_eq!(status_from(issuer.clone(), "[::1]:5000", "GET", "/admin/issued").await, StatusCode::OK);
        assert_eq!(status_from(issuer, "203.0.113.7:5000", "GET", "/issue/challenge").await, StatusCode::OK);
        assert_eq!(status_from(registry, "203.0.113.7:5000", "GET", "/chain").await, StatusCode::OK);
    });

    let holder = stack.holder("h");
    let remote = |path: &str| {
        let mut req = Request::builder().method("GET").uri(path).body(Body::empty()).unwrap();
        req.extensions_mut().insert(ConnectInfo("198.51.100.2:4000".parse::<SocketAddr>().unwrap()));
        req
    };
    let agent = vulncred_services::wallet_api::WalletAgent {
        wallet: holder.wallet.clone(),
        registry: std::sync::Arc::new(RemoteRegistry::new(&stack.registry_url)),
        transport: std::sync::Arc::new(vulncred_services::client::HttpTransport::default()),
        clock: stack.clock.clone(),
    };
    let router = vulncred_services::wallet_api::router(agent);
    stack.rt.block_on(async {
        for path in ["/wallet", "/inbox", "/audit", "/wallet/did"] {
            assert_eq!(router.clone().oneshot(remote(path)).await.unwrap().status(), StatusCode::FORBIDDEN, "{path}");
        }
    });
}
