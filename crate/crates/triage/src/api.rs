//! HTTP/JSON API under `/api/v1`.
//!
//! | Method | Path | Body / query |
//! |---|---|---|
//! | GET  | `/api/v1/health` | — (no token needed) |
//! | GET  | `/api/v1/products` | `?status=assigned\|unassigned` |
//! | GET  | `/api/v1/products/{id}` | — |
//! | POST | `/api/v1/inventory/import` | multipart: `file`, optional `source`, `format` |
//! | GET  | `/api/v1/products/{id}/candidates` | `?limit=10` |
//! | PUT  | `/api/v1/products/{id}/assignment` | `{"cpe": "..."}` or `{"wfn": {...}}`, `source`, `derived_from`, `user` |
//! | POST | `/api/v1/products/{id}/scan` | — |
//! | GET  | `/api/v1/products/{id}/alerts` | `?state=PENDING&grouped=true` |
//! | POST | `/api/v1/alerts/decide` | `{"alert_ids": [..]}` or `{"product_id", "group_id"}`, `decision`, `user` |
//! | GET  | `/api/v1/reports/summary` | `?vendor=&state=&since=&status=` |
//! | POST | `/api/v1/admin/rescan` | — |
//!
//! Errors are `{"error": {"code": "...", "message": "..."}}`. When a token is
//! configured, every route except health requires `Authorization: Bearer <token>`.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use iva_core::naming::{AttributeValue, CpeUri, Wfn};
use serde::Deserialize;
use serde_json::json;
use tracing::{info, warn};

use crate::error::TriageError;
use crate::import::InventoryFormat;
use crate::service::{AssignRequest, DecideRequest, ProductStatus, ReportFilters, TriageService};
use crate::store::{parse_cpe, AlertState, AssignmentSource};

pub const API_PREFIX: &str = "/api/v1";

#[derive(Clone)]
struct AppState {
    svc: Arc<TriageService>,
    token: Option<Arc<str>>,
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, code: "BAD_REQUEST", message: message.into() }
    }
}

impl From<TriageError> for ApiError {
    fn from(e: TriageError) -> Self {
        let status = match &e {
            TriageError::UnknownProduct(_) | TriageError::UnknownAlert(_) | TriageError::UnknownGroup { .. } => StatusCode::NOT_FOUND,
            TriageError::AlreadyDecided(_) | TriageError::Unassigned(_) => StatusCode::CONFLICT,
            TriageError::NoSnapshot => StatusCode::SERVICE_UNAVAILABLE,
            TriageError::InvalidWfn(_) | TriageError::EmptyFile | TriageError::Format(_) | TriageError::EmptySelection => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            TriageError::Config(_) | TriageError::Store(_) | TriageError::Corrupt(_) | TriageError::Io(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            warn!(error = %e, "request failed");
        }
        ApiError { status, code: e.code(), message: e.to_string() }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": {"code": self.code, "message": self.message}}))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

/// Runs a blocking service call off the async workers.
async fn blocking<T, F>(svc: &Arc<TriageService>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&TriageService) -> Result<T, TriageError> + Send + 'static,
{
    let svc = svc.clone();
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, code: "INTERNAL", message: e.to_string() })?
        .map_err(ApiError::from)
}

fn ok(body: impl serde::Serialize) -> ApiResult {
    Ok(Json(body).into_response())
}

async fn require_token(State(st): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.token {
        let supplied = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if supplied != Some(token.as_ref()) {
            return ApiError { status: StatusCode::UNAUTHORIZED, code: "UNAUTHORIZED", message: "missing or wrong bearer token".into() }
                .into_response();
        }
    }
    next.run(req).await
}

pub fn router(svc: Arc<TriageService>, token: Option<String>) -> Router {
    let state = AppState { svc, token: token.map(Arc::from) };
    let protected = Router::new()
        .route("/products", get(list_products))
        .route("/products/{id}", get(get_product))
        .route("/inventory/import", post(import_inventory))
        .route("/products/{id}/candidates", get(candidates))
        .route("/products/{id}/assignment", put(assign))
        .route("/products/{id}/scan", post(scan))
        .route("/products/{id}/alerts", get(alerts))
        .route("/alerts/decide", post(decide))
        .route("/reports/summary", get(report))
        .route("/admin/rescan", post(rescan))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    let api = Router::new().route("/health", get(health)).merge(protected);
    Router::new().nest(API_PREFIX, api).with_state(state)
}

async fn health(State(st): State<AppState>) -> ApiResult {
    ok(json!({"status": "ok", "snapshot_time": st.svc.snapshot().map(|s| s.snapshot_time())}))
}

#[derive(Deserialize)]
struct ProductsQuery {
    status: Option<String>,
}

fn parse_status(s: Option<&str>) -> Result<Option<ProductStatus>, ApiError> {
    s.map(|s| ProductStatus::parse(s).ok_or_else(|| ApiError::bad_request(format!("unknown status {s}")))).transpose()
}

fn parse_state(s: Option<&str>) -> Result<Option<AlertState>, ApiError> {
    s.map(|s| AlertState::parse(s).ok_or_else(|| ApiError::bad_request(format!("unknown state {s}")))).transpose()
}

async fn list_products(State(st): State<AppState>, q: Result<Query<ProductsQuery>, QueryRejection>) -> ApiResult {
    let status = parse_status(q?.status.as_deref())?;
    let products = blocking(&st.svc, move |s| s.products(status)).await?;
    ok(json!({ "products": products }))
}

async fn get_product(State(st): State<AppState>, Path(id): Path<i64>) -> ApiResult {
    ok(blocking(&st.svc, move |s| s.product(id)).await?)
}

async fn import_inventory(State(st): State<AppState>, mut form: Multipart) -> ApiResult {
    let mut file: Option<(Option<String>, Vec<u8>)> = None;
    let mut source = "upload".to_string();
    let mut format: Option<InventoryFormat> = None;
    while let Some(field) = form.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
        match field.name() {
            Some("file") => {
                let name = field.file_name().map(String::from);
                let bytes = field.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
                file = Some((name, bytes.to_vec()));
            }
            Some("source") => source = field.text().await.map_err(|e| ApiError::bad_request(e.body_text()))?,
            Some("format") => {
                let text = field.text().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
                format = Some(match text.to_ascii_lowercase().as_str() {
                    "csv" => InventoryFormat::Csv,
                    "json" => InventoryFormat::Json,
                    other => return Err(ApiError::bad_request(format!("unknown format {other}"))),
                });
            }
            _ => {}
        }
    }
    let (name, bytes) = file.ok_or_else(|| ApiError::bad_request("multipart field `file` is required"))?;
    let format = format.unwrap_or_else(|| InventoryFormat::detect(name.as_deref(), &bytes));
    ok(blocking(&st.svc, move |s| s.import_inventory(&bytes, format, &source)).await?)
}

#[derive(Deserialize)]
struct CandidatesQuery {
    limit: Option<usize>,
}

async fn candidates(State(st): State<AppState>, Path(id): Path<i64>, q: Result<Query<CandidatesQuery>, QueryRejection>) -> ApiResult {
    let limit = q?.limit.unwrap_or(10);
    ok(blocking(&st.svc, move |s| s.list_candidates(id, Some(limit))).await?)
}

#[derive(Deserialize)]
struct AssignBody {
    cpe: Option<String>,
    wfn: Option<BTreeMap<String, String>>,
    #[serde(default)]
    source: Option<AssignmentSource>,
    derived_from: Option<CpeUri>,
    #[serde(default)]
    user: Option<String>,
}

/// Builds a WFN from attribute/value pairs; `ANY` and `NA` are logical values,
/// missing attributes are ANY.
pub fn wfn_from_attributes(attrs: &BTreeMap<String, String>) -> Result<Wfn, TriageError> {
    let mut wfn = Wfn::new();
    for (name, value) in attrs {
        let slot = wfn.attribute_mut(name).ok_or_else(|| TriageError::InvalidWfn(format!("unknown attribute {name}")))?;
        *slot = match value.as_str() {
            "ANY" => AttributeValue::Any,
            "NA" => AttributeValue::Na,
            v => AttributeValue::string(v).map_err(|e| TriageError::InvalidWfn(e.to_string()))?,
        };
    }
    Ok(wfn)
}

async fn assign(State(st): State<AppState>, Path(id): Path<i64>, body: Result<Json<AssignBody>, JsonRejection>) -> ApiResult {
    let Json(body) = body?;
    let wfn = match (&body.cpe, &body.wfn) {
        (Some(text), None) => parse_cpe(text)?,
        (None, Some(attrs)) => wfn_from_attributes(attrs)?,
        _ => return Err(ApiError::bad_request("give exactly one of `cpe` or `wfn`")),
    };
    let req = AssignRequest {
        wfn,
        source: body.source.unwrap_or(AssignmentSource::CandidateSelected),
        derived_from: body.derived_from,
        user: body.user.unwrap_or_else(|| "anonymous".into()),
    };
    ok(blocking(&st.svc, move |s| s.assign_cpe(id, &req)).await?)
}

async fn scan(State(st): State<AppState>, Path(id): Path<i64>) -> ApiResult {
    ok(blocking(&st.svc, move |s| s.scan_product(id)).await?)
}

#[derive(Deserialize)]
struct AlertsQuery {
    state: Option<String>,
    #[serde(default)]
    grouped: bool,
}

async fn alerts(State(st): State<AppState>, Path(id): Path<i64>, q: Result<Query<AlertsQuery>, QueryRejection>) -> ApiResult {
    let Query(q) = q?;
    let state = parse_state(q.state.as_deref())?;
    if q.grouped {
        let groups = blocking(&st.svc, move |s| s.alert_groups(id, state)).await?;
        ok(json!({ "product_id": id, "groups": groups }))
    } else {
        let alerts = blocking(&st.svc, move |s| s.alerts(id, state)).await?;
        ok(json!({ "product_id": id, "alerts": alerts }))
    }
}

async fn decide(State(st): State<AppState>, body: Result<Json<DecideRequest>, JsonRejection>) -> ApiResult {
    let Json(req) = body?;
    let alerts = blocking(&st.svc, move |s| s.set_alert_state(&req)).await?;
    ok(json!({ "alerts": alerts }))
}

#[derive(Deserialize)]
struct ReportQuery {
    vendor: Option<String>,
    state: Option<String>,
    since: Option<DateTime<Utc>>,
    status: Option<String>,
}

async fn report(State(st): State<AppState>, q: Result<Query<ReportQuery>, QueryRejection>) -> ApiResult {
    let Query(q) = q?;
    let filters = ReportFilters {
        vendor: q.vendor,
        state: parse_state(q.state.as_deref())?,
        since: q.since,
        status: parse_status(q.status.as_deref())?,
    };
    ok(blocking(&st.svc, move |s| s.report(&filters)).await?)
}

async fn rescan(State(st): State<AppState>) -> ApiResult {
    ok(blocking(&st.svc, |s| Ok(s.scheduled_rescan())).await?)
}

/// Runs [`TriageService::scheduled_rescan`] every `interval`, first after one interval.
pub fn spawn_rescan_loop(svc: Arc<TriageService>, interval: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut ticker = tokio::time::interval_at(tokio::time::Instant::now() + interval, interval);
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            ticker.tick().await;
            let s = svc.clone();
            match tokio::task::spawn_blocking(move || s.scheduled_rescan()).await {
                Ok(summary) => info!(status = ?summary.status, new_alerts = summary.new_alerts, "scheduled rescan"),
                Err(e) => warn!(error = %e, "scheduled rescan panicked"),
            }
        }
    })
}

/// Serves the API on `listener` until the future is dropped.
pub async fn serve(listener: tokio::net::TcpListener, svc: Arc<TriageService>, token: Option<String>, rescan_every: Option<Duration>) -> std::io::Result<()> {
    let _scheduler = rescan_every.filter(|d| !d.is_zero()).map(|d| spawn_rescan_loop(svc.clone(), d));
    info!(addr = ?listener.local_addr().ok(), "serving");
    axum::serve(listener, router(svc, token)).await
}
