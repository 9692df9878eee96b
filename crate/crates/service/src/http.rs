//! HTTP binding: every request goes through one fallback handler that feeds
//! [`Service::handle`] under a mutex, so writes are serialized.

use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use serde_json::Value;

use crate::api::{parse_query, ApiRequest, Service};
use crate::error::ApiError;

pub type Shared = Arc<Mutex<Service>>;

pub fn router(service: Shared) -> Router {
    Router::new().fallback(dispatch).with_state(service)
}

fn bearer(headers: &HeaderMap) -> Option<String> {
    let raw = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    raw.strip_prefix("Bearer ").map(|t| t.trim().to_string())
}

async fn dispatch(
    State(service): State<Shared>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let body = if body.is_empty() {
        None
    } else {
        match serde_json::from_slice::<Value>(&body) {
            Ok(v) => Some(v),
            Err(e) => return respond(ApiError::bad_request(format!("malformed JSON: {e}")).into()),
        }
    };
    let req = ApiRequest {
        method: method.as_str().to_string(),
        path: uri.path().to_string(),
        query: parse_query(uri.query().unwrap_or("")),
        token: bearer(&headers),
        body,
    };
    let response = {
        let mut guard = service.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        guard.handle(&req)
    };
    tracing::debug!(method = %req.method, path = %req.path, status = response.status, "handled");
    respond(response)
}

fn respond(response: crate::api::ApiResponse) -> Response {
    let status = StatusCode::from_u16(response.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, axum::Json(response.body)).into_response()
}

/// Serves until ctrl-c.
pub async fn serve(service: Service, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let app = router(Arc::new(Mutex::new(service)));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
