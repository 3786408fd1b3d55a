//! Server plumbing shared by the four services: canonical bodies, error
//! responses, the loopback guard and blocking offload.

use std::net::SocketAddr;

use axum::body::Bytes;
use axum::extract::{ConnectInfo, FromRequest, Request};
use axum::http::{header, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Serialize;
use vulncred::canonical::{from_canonical_bytes, to_canonical_bytes};
use vulncred::registry::RegistryError;

/// Request bodies larger than this are refused before decoding.
pub const MAX_BODY_BYTES: usize = 1 << 20;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl ToString) -> Self {
        ApiError { status, message: message.to_string() }
    }

    pub fn bad_request(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn not_found(message: impl ToString) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    pub fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}: {}", self.status, self.message);
        }
        let body = serde_json::json!({ "error": self.message });
        (self.status, axum::Json(body)).into_response()
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let status = match &e {
            RegistryError::MalformedPayload(_) => StatusCode::BAD_REQUEST,
            RegistryError::Unauthorized(_) => StatusCode::FORBIDDEN,
            RegistryError::NonMonotoneStatus => StatusCode::CONFLICT,
            RegistryError::NotFound(_) => StatusCode::NOT_FOUND,
            RegistryError::Unreachable(_) => StatusCode::BAD_GATEWAY,
            RegistryError::Corrupt(_) | RegistryError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e)
    }
}

/// A body that must already be in canonical form. Anything else is a 400.
pub struct Canonical<T>(pub T);

impl<T, S> FromRequest<S> for Canonical<T>
where
    T: DeserializeOwned + Serialize,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e| ApiError::new(e.status(), e.body_text()))?;
        from_canonical_bytes(&bytes).map(Canonical).map_err(ApiError::bad_request)
    }
}

/// 200 with the canonical encoding of `value`.
pub fn canonical<T: Serialize>(value: &T) -> Response {
    match to_canonical_bytes(value) {
        Ok(bytes) => ([(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Err(e) => ApiError::internal(e).into_response(),
    }
}

/// Runs `f` on the blocking pool. Core operations hold locks, fsync and may
/// call other services synchronously.
pub async fn blocking<R, F>(f: F) -> Result<R, ApiError>
where
    F: FnOnce() -> R + Send + 'static,
    R: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)
}

/// Middleware refusing any peer that is not on a loopback address.
pub async fn loopback_only(ConnectInfo(peer): ConnectInfo<SocketAddr>, req: Request, next: Next) -> Response {
    if peer.ip().is_loopback() {
        next.run(req).await
    } else {
        log::warn!("refused {} {} from {peer}", req.method(), req.uri().path());
        ApiError::new(StatusCode::FORBIDDEN, "this endpoint is only served on loopback").into_response()
    }
}

/// Serves `router` until the process ends, with peer addresses available to
/// the loopback guard.
pub async fn serve(listener: tokio::net::TcpListener, router: Router) -> std::io::Result<()> {
    let router = router.layer(axum::extract::DefaultBodyLimit::max(MAX_BODY_BYTES));
    axum::serve(listener, router.into_make_service_with_connect_info::<SocketAddr>()).await
}

/// Binds `addr` and prints the bound address, so callers passing port 0 can
/// learn the real one from the first line of output.
pub async fn bind(addr: &str) -> std::io::Result<tokio::net::TcpListener> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    println!("listening on http://{}", listener.local_addr()?);
    use std::io::Write;
    std::io::stdout().flush()?;
    Ok(listener)
}

#[cfg(test)]
mod tests {
    use super::*;
    use axum::body::Body;
    use axum::routing::post;
    use tower::ServiceExt;

    #[derive(serde::Deserialize, Serialize)]
    struct Ping {
        a: i64,
        b: String,
    }

    async fn post_body(body: &'static [u8]) -> StatusCode {
        let router = Router::new().route("/", post(|Canonical(p): Canonical<Ping>| async move { canonical(&p) }));
        let req = Request::builder().method("POST").uri("/").body(Body::from(body)).unwrap();
        router.oneshot(req).await.unwrap().status()
    }

    #[tokio::test]
    async fn canonical_extractor_is_strict() {
        assert_eq!(post_body(br#"{"a":1,"b":"x"}"#).await, StatusCode::OK);
        assert_eq!(post_body(br#"{"b":"x","a":1}"#).await, StatusCode::BAD_REQUEST);
        assert_eq!(post_body(br#"{"a": 1,"b":"x"}"#).await, StatusCode::BAD_REQUEST);
        assert_eq!(post_body(br#"{"a":1}"#).await, StatusCode::BAD_REQUEST);
    }

    #[test]
    fn registry_errors_map_to_statuses() {
        let status = |e| ApiError::from(e).status;
        assert_eq!(status(RegistryError::MalformedPayload("x".into())), StatusCode::BAD_REQUEST);
        assert_eq!(status(RegistryError::Unauthorized("x".into())), StatusCode::FORBIDDEN);
        assert_eq!(status(RegistryError::NonMonotoneStatus), StatusCode::CONFLICT);
        assert_eq!(status(RegistryError::NotFound("x".into())), StatusCode::NOT_FOUND);
        assert_eq!(status(RegistryError::Unreachable("x".into())), StatusCode::BAD_GATEWAY);
    }
}
