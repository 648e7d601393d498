#![allow(dead_code)]

use std::fs::File;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use iva_core::feeds::{ingest, CatalogSnapshot};
use iva_core::matching::MatchConfig;
use iva_triage::import::InventoryFormat;
use iva_triage::store::{parse_cpe, AssignmentSource, Store};
use iva_triage::service::{AssignRequest, TriageService};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn at(s: &str) -> DateTime<Utc> {
    DateTime::parse_from_rfc3339(s).unwrap().into()
}

pub fn snapshot_from(cve_feed: &str, time: &str) -> Arc<CatalogSnapshot> {
    let dict = File::open(fixture("official-cpe-dictionary_v2.3.xml")).unwrap();
    let cves = File::open(fixture(cve_feed)).unwrap();
    Arc::new(ingest(dict, [cves], at(time)).unwrap().0)
}

pub fn first_snapshot() -> Arc<CatalogSnapshot> {
    snapshot_from("nvdcve-2.0-2016.xml", "2017-02-14T00:00:00Z")
}

pub fn second_snapshot() -> Arc<CatalogSnapshot> {
    snapshot_from("nvdcve-2.0-2016-update.xml", "2017-02-15T00:00:00Z")
}

/// In-memory service with the fixture inventory imported and the first snapshot loaded.
pub fn service() -> TriageService {
    let svc = TriageService::new(Store::open_in_memory().unwrap(), MatchConfig::default()).with_snapshot(first_snapshot());
    let inv = std::fs::read(fixture("inventory.csv")).unwrap();
    svc.import_inventory(&inv, InventoryFormat::Csv, "fixture").unwrap();
    svc
}

pub fn product_id(svc: &TriageService, external_id: &str) -> i64 {
    svc.products(None).unwrap().into_iter().find(|p| p.product.external_id == external_id).unwrap().product.id
}

pub fn request(cpe: &str) -> AssignRequest {
    AssignRequest { wfn: parse_cpe(cpe).unwrap(), source: AssignmentSource::CandidateSelected, derived_from: None, user: "analyst".into() }
}
