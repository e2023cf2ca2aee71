use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use memeguard::labels::Stage;

use crate::error::ServiceError;
use crate::model::AnnotatorProfile;
use crate::service::{AnnotationInput, BatchRequest, RatingInput, Service};

/// Environment variable holding the bearer token for `/api/admin/*`.
pub const ADMIN_TOKEN_ENV: &str = "MEMEGUARD_ADMIN_TOKEN";

#[derive(Clone)]
struct AppState {
    service: Arc<Service>,
    admin_token: Option<Arc<str>>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status_code()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let mut body = json!({ "error": self.to_string() });
        if let ServiceError::Incomplete(samples) = &self {
            body["samples"] = json!(samples);
        }
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ServiceError>;

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn require_admin(app: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    // without a configured token the admin surface stays closed
    let Some(expected) = app.admin_token.as_deref() else {
        return Err(ServiceError::Unauthorized);
    };
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or(ServiceError::Unauthorized)?;
    if constant_time_eq(presented.trim().as_bytes(), expected.as_bytes()) {
        Ok(())
    } else {
        Err(ServiceError::Unauthorized)
    }
}

#[derive(Deserialize)]
struct AnnotatorQuery {
    annotator: Option<String>,
}

impl AnnotatorQuery {
    fn id(self) -> ApiResult<String> {
        self.annotator
            .filter(|a| !a.trim().is_empty())
            .ok_or_else(|| ServiceError::BadRequest("missing ?annotator=".into()))
    }
}

#[derive(Deserialize)]
struct StageQuery {
    stage: Option<String>,
}

impl StageQuery {
    fn stage(self) -> ApiResult<Stage> {
        self.stage
            .ok_or_else(|| ServiceError::BadRequest("missing ?stage=I|II".into()))?
            .parse()
            .map_err(|e: memeguard::Error| ServiceError::BadRequest(e.to_string()))
    }
}

/// Unwrap a JSON body, turning axum's rejection into the service's own 400 shape.
fn body<T>(payload: Result<Json<T>, axum::extract::rejection::JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn next_task(State(app): State<AppState>, Query(q): Query<AnnotatorQuery>) -> ApiResult<Response> {
    Ok(Json(app.service.next_task(&q.id()?)?).into_response())
}

async fn progress(State(app): State<AppState>, Query(q): Query<AnnotatorQuery>) -> ApiResult<Response> {
    Ok(Json(app.service.progress(&q.id()?)?).into_response())
}

async fn annotate(
    State(app): State<AppState>,
    payload: Result<Json<AnnotationInput>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    let record = app.service.submit_annotation(body(payload)?)?;
    Ok((StatusCode::CREATED, Json(record)).into_response())
}

async fn rate(
    State(app): State<AppState>,
    payload: Result<Json<RatingInput>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    let record = app.service.submit_rating(body(payload)?)?;
    Ok((StatusCode::CREATED, Json(record)).into_response())
}

async fn media(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let (bytes, mime) = app.service.media(&id)?;
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

async fn admin_annotators(
    State(app): State<AppState>,
    headers: HeaderMap,
    payload: Result<Json<AnnotatorProfile>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    require_admin(&app, &headers)?;
    let profile = app.service.register_annotator(body(payload)?)?;
    Ok((StatusCode::CREATED, Json(profile)).into_response())
}

async fn admin_batches(
    State(app): State<AppState>,
    headers: HeaderMap,
    payload: Result<Json<BatchRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Response> {
    require_admin(&app, &headers)?;
    let receipt = app.service.create_batch(body(payload)?)?;
    Ok((StatusCode::CREATED, Json(receipt)).into_response())
}

async fn admin_finalize(
    State(app): State<AppState>,
    headers: HeaderMap,
    Query(q): Query<StageQuery>,
) -> ApiResult<Response> {
    require_admin(&app, &headers)?;
    Ok(Json(app.service.finalize(q.stage()?)?).into_response())
}

async fn admin_agreement(
    State(app): State<AppState>,
    headers: HeaderMap,
    Query(q): Query<StageQuery>,
) -> ApiResult<Response> {
    require_admin(&app, &headers)?;
    Ok(Json(app.service.agreement(q.stage()?)?).into_response())
}

async fn admin_ratings(State(app): State<AppState>, headers: HeaderMap) -> ApiResult<Response> {
    require_admin(&app, &headers)?;
    Ok(Json(app.service.rating_report()).into_response())
}

async fn admin_records(State(app): State<AppState>, headers: HeaderMap) -> ApiResult<Response> {
    require_admin(&app, &headers)?;
    Ok(Json(app.service.records()).into_response())
}

/// The HTTP surface. `admin_token` of `None` disables every admin endpoint.
pub fn router(service: Arc<Service>, admin_token: Option<String>) -> Router {
    let app = AppState {
        service,
        admin_token: admin_token.filter(|t| !t.is_empty()).map(Arc::from),
    };
    Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/progress", get(progress))
        .route("/api/annotations", post(annotate))
        .route("/api/ratings", post(rate))
        .route("/api/samples/{id}/media", get(media))
        .route("/api/admin/annotators", post(admin_annotators))
        .route("/api/admin/batches", post(admin_batches))
        .route("/api/admin/finalize", post(admin_finalize))
        .route("/api/admin/agreement", get(admin_agreement))
        .route("/api/admin/ratings", get(admin_ratings))
        .route("/api/admin/records", get(admin_records))
        .with_state(app)
}

/// Serve until Ctrl-C. The admin token is read from [`ADMIN_TOKEN_ENV`].
pub async fn serve(service: Arc<Service>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let token = std::env::var(ADMIN_TOKEN_ENV).ok();
    if token.as_deref().is_none_or(str::is_empty) {
        tracing::warn!("{ADMIN_TOKEN_ENV} is not set; admin endpoints will refuse every request");
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "annotation service listening");
    axum::serve(listener, router(service, token))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
