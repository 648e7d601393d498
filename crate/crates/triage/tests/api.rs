mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use common::*;
use http_body_util::BodyExt;
use iva_core::matching::MatchConfig;
use iva_triage::api::router;
use iva_triage::store::Store;
use iva_triage::TriageService;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri).header(header::AUTHORIZATION, "Bearer secret");
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn multipart(file_name: &str, content: &[u8]) -> (String, Vec<u8>) {
    let boundary = "XyZbOuNdArY";
    let mut body = Vec::new();
    body.extend_from_slice(format!("--{boundary}\r\nContent-Disposition: form-data; name=\"source\"\r\n\r\ncmdb\r\n").as_bytes());
    body.extend_from_slice(
        format!("--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{file_name}\"\r\nContent-Type: text/csv\r\n\r\n").as_bytes(),
    );
    body.extend_from_slice(content);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}

async fn upload(app: &Router, file_name: &str, content: &[u8]) -> (StatusCode, Value) {
    let (ctype, body) = multipart(file_name, content);
    let req = Request::post("/api/v1/inventory/import")
        .header(header::AUTHORIZATION, "Bearer secret")
        .header(header::CONTENT_TYPE, ctype)
        .body(Body::from(body))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn app() -> Router {
    let svc = TriageService::new(Store::open_in_memory().unwrap(), MatchConfig::default()).with_snapshot(first_snapshot());
    router(Arc::new(svc), Some("secret".into()))
}

async fn imported() -> (Router, i64) {
    let app = app();
    let (status, summary) = upload(&app, "inventory.csv", &std::fs::read(fixture("inventory.csv")).unwrap()).await;
    assert_eq!(status, StatusCode::OK, "{summary}");
    assert_eq!(summary["inserted"], 5);
    let (_, list) = call(&app, Method::GET, "/api/v1/products", None).await;
    let p9 = list["products"].as_array().unwrap().iter().find(|p| p["external_id"] == "P9").unwrap()["id"].as_i64().unwrap();
    (app, p9)
}

#[tokio::test]
async fn token_is_enforced_except_for_health() {
    let app = app();
    let resp = app.clone().oneshot(Request::get("/api/v1/products").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
    let resp = app.clone().oneshot(Request::get("/api/v1/health").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}

#[tokio::test]
async fn full_workflow_over_http() {
    let (app, p9) = imported().await;

    let (status, c) = call(&app, Method::GET, &format!("/api/v1/products/{p9}/candidates?limit=2"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(c["candidates"][0]["uri"], "cpe:/a:wireshark:wireshark:2.0.0");
    assert_eq!(c["candidates"][0]["formatted"], "cpe:2.3:a:wireshark:wireshark:2.0.0:*:*:*:*:*:*:*");

    let body = json!({"wfn": {"part": "a", "vendor": "wireshark", "product": "wireshark", "version": "2.0.0", "update": "ANY"}, "user": "ana"});
    let (status, out) = call(&app, Method::PUT, &format!("/api/v1/products/{p9}/assignment"), Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{out}");
    assert_eq!(out["changed"], true);
    assert_eq!(out["scan"]["new_alerts"], 2);

    let (_, grouped) = call(&app, Method::GET, &format!("/api/v1/products/{p9}/alerts?grouped=true"), None).await;
    let groups = grouped["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 1);
    assert_eq!(groups[0]["alerts"].as_array().unwrap().len(), 2);
    let group_id = groups[0]["group_id"].as_str().unwrap().to_string();
    let first_alert = groups[0]["alerts"][0]["id"].as_i64().unwrap();

    let one = json!({"alert_ids": [first_alert], "decision": "CONFIRMED", "user": "ana"});
    let (status, done) = call(&app, Method::POST, "/api/v1/alerts/decide", Some(one)).await;
    assert_eq!(status, StatusCode::OK, "{done}");
    assert_eq!(done["alerts"][0]["state"], "CONFIRMED");
    assert_eq!(done["alerts"][0]["decided_by"], "ana");
    // the group still holds the decided alert, so the whole request is refused
    let group = json!({"product_id": p9, "group_id": group_id, "decision": "DISCARDED"});
    let (status, err) = call(&app, Method::POST, "/api/v1/alerts/decide", Some(group)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"]["code"], "ALREADY_DECIDED");

    let (_, pending) = call(&app, Method::GET, &format!("/api/v1/products/{p9}/alerts?state=PENDING"), None).await;
    assert_eq!(pending["alerts"].as_array().unwrap().len(), 1);

    let (status, scan) = call(&app, Method::POST, &format!("/api/v1/products/{p9}/scan"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(scan["new_alerts"], 0);

    let (_, report) = call(&app, Method::GET, "/api/v1/reports/summary?vendor=wireshark", None).await;
    assert_eq!(report["totals"]["confirmed"], 1);
    assert_eq!(report["totals"]["pending"], 1);
    let (_, assigned) = call(&app, Method::GET, "/api/v1/products?status=assigned", None).await;
    assert_eq!(assigned["products"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn error_mapping() {
    let (app, p9) = imported().await;
    let (status, e) = call(&app, Method::GET, "/api/v1/products/999/candidates", None).await;
    assert_eq!((status, e["error"]["code"].as_str()), (StatusCode::NOT_FOUND, Some("UNKNOWN_PRODUCT")));

    let (status, e) = call(&app, Method::POST, &format!("/api/v1/products/{p9}/scan"), None).await;
    assert_eq!((status, e["error"]["code"].as_str()), (StatusCode::CONFLICT, Some("UNASSIGNED")));

    let bad = json!({"cpe": "cpe:/a::wireshark"});
    let (status, e) = call(&app, Method::PUT, &format!("/api/v1/products/{p9}/assignment"), Some(bad)).await;
    assert_eq!((status, e["error"]["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("INVALID_WFN")));

    let both = json!({"cpe": "cpe:/a:x:y", "wfn": {"vendor": "x"}});
    let (status, _) = call(&app, Method::PUT, &format!("/api/v1/products/{p9}/assignment"), Some(both)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, e) = call(&app, Method::POST, "/api/v1/alerts/decide", Some(json!({"alert_ids": [], "decision": "DISCARDED"}))).await;
    assert_eq!((status, e["error"]["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("EMPTY_SELECTION")));
    let (status, e) = call(&app, Method::POST, "/api/v1/alerts/decide", Some(json!({"alert_ids": [77], "decision": "DISCARDED"}))).await;
    assert_eq!((status, e["error"]["code"].as_str()), (StatusCode::NOT_FOUND, Some("UNKNOWN_ALERT")));

    let (status, e) = call(&app, Method::GET, "/api/v1/products?status=maybe", None).await;
    assert_eq!((status, e["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("BAD_REQUEST")));

    let (status, e) = upload(&app, "empty.csv", b"").await;
    assert_eq!((status, e["error"]["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("EMPTY_FILE")));

    let (status, e) = call(&app, Method::POST, "/api/v1/admin/rescan", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(e["status"], "failed");
}

#[tokio::test]
async fn no_snapshot_is_service_unavailable() {
    let svc = TriageService::new(Store::open_in_memory().unwrap(), MatchConfig::default());
    svc.import_inventory(b"external_id,product\nA,thing\n", iva_triage::import::InventoryFormat::Csv, "t").unwrap();
    let app = router(Arc::new(svc), Some("secret".into()));
    let (status, e) = call(&app, Method::GET, "/api/v1/products/1/candidates", None).await;
    assert_eq!((status, e["error"]["code"].as_str()), (StatusCode::SERVICE_UNAVAILABLE, Some("NO_SNAPSHOT")));
    let (status, out) = call(&app, Method::PUT, "/api/v1/products/1/assignment", Some(json!({"cpe": "cpe:/a:x:thing"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert!(out["scan"].is_null());
}
