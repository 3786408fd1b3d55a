//! Blocking HTTP clients: the remote registry handle, the exchange
//! transports and small helpers for the command-line tools.

use std::sync::{Mutex, MutexGuard};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use vulncred::canonical::{canonicalize, from_canonical_bytes, to_canonical_bytes, CanonicalValue};
use vulncred::exchange::{
    HolderTransport, PresentationRequest, PresentationResponse, TransportError, VerifierTransport,
};
use vulncred::registry::{PayloadKind, Registry, RegistryBlock, RegistryError, RegistryHandle, RegistryView};

const TIMEOUT: Duration = Duration::from_secs(10);

/// A status code and body; any status, including errors, is a reply.
#[derive(Debug)]
pub struct Reply {
    pub status: u16,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn ok(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    /// The `error` field of an error body, or the raw text.
    pub fn error_message(&self) -> String {
        serde_json::from_slice::<serde_json::Value>(&self.body)
            .ok()
            .and_then(|v| v.get("error").and_then(|e| e.as_str()).map(String::from))
            .unwrap_or_else(|| self.text())
    }

    pub fn json<T: DeserializeOwned>(&self) -> Result<T, String> {
        serde_json::from_slice(&self.body).map_err(|e| format!("bad response body: {e}"))
    }
}

#[derive(Clone)]
pub struct Http(ureq::Agent);

impl Default for Http {
    fn default() -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(TIMEOUT)).http_status_as_error(false).build();
        Http(config.into())
    }
}

impl Http {
    pub fn get(&self, url: &str) -> Result<Reply, String> {
        let resp = self.0.get(url).call().map_err(|e| format!("GET {url}: {e}"))?;
        read(resp, url)
    }

    pub fn post_bytes(&self, url: &str, body: &[u8]) -> Result<Reply, String> {
        let resp = self
            .0
            .post(url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| format!("POST {url}: {e}"))?;
        read(resp, url)
    }

    pub fn post_canonical<T: Serialize>(&self, url: &str, body: &T) -> Result<Reply, String> {
        let bytes = to_canonical_bytes(body).map_err(|e| e.to_string())?;
        self.post_bytes(url, &bytes)
    }

    pub fn post_json<T: Serialize>(&self, url: &str, body: &T) -> Result<Reply, String> {
        let bytes = serde_json::to_vec(body).map_err(|e| e.to_string())?;
        self.post_bytes(url, &bytes)
    }
}

fn read(mut resp: ureq::http::Response<ureq::Body>, url: &str) -> Result<Reply, String> {
    let status = resp.status().as_u16();
    let body = resp.body_mut().read_to_vec().map_err(|e| format!("{url}: {e}"))?;
    Ok(Reply { status, body })
}

pub fn join(base: &str, path: &str) -> String {
    format!("{}{}", base.trim_end_matches('/'), path)
}

/// A registry behind HTTP. Every read first catches a local mirror up with
/// the served chain, verifying each new block, so reads are never staler
/// than the registry at the time of the call.
pub struct RemoteRegistry {
    base: String,
    http: Http,
    mirror: Mutex<Registry>,
}

impl RemoteRegistry {
    pub fn new(base_url: &str) -> Self {
        RemoteRegistry { base: base_url.trim_end_matches('/').into(), http: Http::default(), mirror: Default::default() }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn sync(&self) -> Result<MutexGuard<'_, Registry>, RegistryError> {
        let mut mirror = self.mirror.lock().expect("mirror poisoned");
        let have = mirror.len() as u64;
        // Re-fetch the last known block too, to notice a rewritten history.
        let from = have.saturating_sub(1);
        let reply = self
            .http
            .get(&format!("{}/chain?from={from}", self.base))
            .map_err(RegistryError::Unreachable)?;
        if !reply.ok() {
            return Err(RegistryError::Unreachable(format!("chain: {} {}", reply.status, reply.error_message())));
        }
        let mut blocks: Vec<RegistryBlock> = from_canonical_bytes(&reply.body)
            .map_err(|e| RegistryError::Corrupt(format!("served chain: {e}")))?;
        if have > 0 {
            if blocks.first() != mirror.blocks().last() {
                return Err(RegistryError::Corrupt("served chain diverges from blocks already seen".into()));
            }
            blocks.remove(0);
        }
        mirror.extend_verified(blocks)?;
        Ok(mirror)
    }
}

impl RegistryHandle for RemoteRegistry {
    fn read(&self, f: &mut dyn FnMut(&dyn RegistryView)) -> Result<(), RegistryError> {
        let mirror = self.sync()?;
        f(&*mirror);
        Ok(())
    }

    fn submit(&self, kind: PayloadKind, payload: CanonicalValue) -> Result<RegistryBlock, RegistryError> {
        let path = match kind {
            PayloadKind::DidAnchor => "/anchor",
            PayloadKind::StatusUpdate => "/status",
        };
        let reply = self
            .http
            .post_bytes(&join(&self.base, path), &canonicalize(&payload))
            .map_err(RegistryError::Unreachable)?;
        match reply.status {
            200 => from_canonical_bytes(&reply.body).map_err(|e| RegistryError::Corrupt(format!("block reply: {e}"))),
            400 => Err(RegistryError::MalformedPayload(reply.error_message())),
            403 => Err(RegistryError::Unauthorized(reply.error_message())),
            409 => Err(RegistryError::NonMonotoneStatus),
            s => Err(RegistryError::Unreachable(format!("{s} {}", reply.error_message()))),
        }
    }
}

/// Pushes requests and responses to the URL named by the other party.
#[derive(Clone, Default)]
pub struct HttpTransport(pub Http);

impl HttpTransport {
    fn push<T: Serialize>(&self, endpoint: &str, body: &T) -> Result<(), TransportError> {
        let reply = self.0.post_canonical(endpoint, body).map_err(TransportError)?;
        if reply.ok() {
            Ok(())
        } else {
            Err(TransportError(format!("{endpoint}: {} {}", reply.status, reply.error_message())))
        }
    }
}

impl HolderTransport for HttpTransport {
    fn deliver(&self, endpoint: &str, request: &PresentationRequest) -> Result<(), TransportError> {
        self.push(endpoint, request)
    }
}

impl VerifierTransport for HttpTransport {
    fn respond(&self, endpoint: &str, response: &PresentationResponse) -> Result<(), TransportError> {
        self.push(endpoint, response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn join_tolerates_trailing_slashes() {
        assert_eq!(join("http://h:1/", "/x"), "http://h:1/x");
        assert_eq!(join("http://h:1", "/x"), "http://h:1/x");
    }

    #[test]
    fn reply_error_message_prefers_the_error_field() {
        let r = Reply { status: 404, body: br#"{"error":"no such DID"}"#.to_vec() };
        assert!(!r.ok());
        assert_eq!(r.error_message(), "no such DID");
        let r = Reply { status: 502, body: b"upstream down".to_vec() };
        assert_eq!(r.error_message(), "upstream down");
    }
}
