//! Triage workflow: inventory → CPE candidates → assignment → CVE alerts → decisions.
//!
//! [`TriageService`] is shared between request handlers. The store is
//! guarded by a mutex, so writes are serialized; the catalog snapshot is an
//! `Arc` swapped atomically by rescans, and every scan runs against the
//! snapshot it started with.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, Utc};
use iva_core::feeds::{ingest, load_snapshot, save_snapshot, CatalogSnapshot, FeedFetcher, IngestReport};
use iva_core::matching::{find_cpe_candidates, group_by_cpe, search_cves, CveOrigin, MatchConfig};
use iva_core::naming::{CpeUri, FormattedString, Wfn};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::config::{FeedsConfig, ServiceConfig};
use crate::error::TriageError;
use crate::import::{parse_inventory, InventoryFormat, RowError};
use crate::store::{Alert, AlertQuery, AlertState, Assignment, AssignmentSource, Decision, NewAlert, ProductRecord, Store, Upsert};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProductStatus {
    Assigned,
    Unassigned,
}

impl ProductStatus {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "assigned" => Some(ProductStatus::Assigned),
            "unassigned" => Some(ProductStatus::Unassigned),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductView {
    #[serde(flatten)]
    pub product: ProductRecord,
    pub status: ProductStatus,
    pub assignment: Option<Assignment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportSummary {
    pub records: usize,
    pub inserted: usize,
    pub updated: usize,
    pub unchanged: usize,
    pub skipped: Vec<RowError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateView {
    pub rank: usize,
    pub uri: CpeUri,
    pub formatted: Option<FormattedString>,
    pub title: String,
    pub vendor_distance: usize,
    pub product_distance: usize,
    pub exact_version: bool,
    pub common_prefix: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateList {
    pub product_id: i64,
    pub candidates: Vec<CandidateView>,
    /// True when nothing in the dictionary came close; the CPE has to be entered by hand.
    pub no_candidates: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignRequest {
    pub wfn: Wfn,
    pub source: AssignmentSource,
    #[serde(default)]
    pub derived_from: Option<CpeUri>,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    pub product_id: i64,
    pub assignment: CpeUri,
    pub new_alerts: usize,
    pub pending: Vec<Alert>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignOutcome {
    pub assignment: Assignment,
    /// False when the same WFN was already assigned (nothing happened).
    pub changed: bool,
    /// Present when a snapshot was available to scan against.
    pub scan: Option<ScanOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertGroup {
    pub group_id: String,
    pub origin: CveOrigin,
    pub cpes: Vec<CpeUri>,
    pub exact_version: bool,
    pub alerts: Vec<Alert>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecideRequest {
    #[serde(default)]
    pub alert_ids: Vec<i64>,
    #[serde(default)]
    pub product_id: Option<i64>,
    #[serde(default)]
    pub group_id: Option<String>,
    pub decision: Option<Decision>,
    #[serde(default)]
    pub user: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RescanStatus {
    Unchanged,
    Updated,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescanSummary {
    pub status: RescanStatus,
    pub error: Option<String>,
    pub snapshot_time: Option<DateTime<Utc>>,
    pub products_scanned: usize,
    pub new_alerts: usize,
    pub ingest: Option<IngestReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportFilters {
    /// Case-insensitive substring of the inventory vendor.
    pub vendor: Option<String>,
    pub state: Option<AlertState>,
    /// Alerts created at or after this time.
    pub since: Option<DateTime<Utc>>,
    pub status: Option<ProductStatus>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub products: usize,
    pub assigned: usize,
    pub unassigned: usize,
    pub pending: usize,
    pub confirmed: usize,
    pub discarded: usize,
}

impl Totals {
    fn count(&mut self, state: AlertState) {
        match state {
            AlertState::Pending => self.pending += 1,
            AlertState::Confirmed => self.confirmed += 1,
            AlertState::Discarded => self.discarded += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductReport {
    pub id: i64,
    pub external_id: String,
    pub vendor: String,
    pub product: String,
    pub version: String,
    pub status: ProductStatus,
    pub assigned: Option<CpeUri>,
    pub pending: usize,
    pub confirmed: usize,
    pub discarded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub snapshot_time: Option<DateTime<Utc>>,
    pub totals: Totals,
    pub products: Vec<ProductReport>,
    pub alerts: Vec<Alert>,
}

type Clock = Box<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct TriageService {
    store: Mutex<Store>,
    snapshot: RwLock<Option<Arc<CatalogSnapshot>>>,
    config: MatchConfig,
    feeds: Option<FeedsConfig>,
    snapshot_dir: Option<PathBuf>,
    fetcher: Mutex<Option<FeedFetcher>>,
    clock: Clock,
}

impl std::fmt::Debug for TriageService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TriageService").field("config", &self.config).field("feeds", &self.feeds).finish_non_exhaustive()
    }
}

impl TriageService {
    pub fn new(store: Store, config: MatchConfig) -> Self {
        TriageService {
            store: Mutex::new(store),
            snapshot: RwLock::new(None),
            config,
            feeds: None,
            snapshot_dir: None,
            fetcher: Mutex::new(None),
            clock: Box::new(Utc::now),
        }
    }

    /// Opens the store and, if the snapshot directory holds one, the snapshot.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, TriageError> {
        let mut svc = Self::new(Store::open(&cfg.store)?, cfg.match_config());
        svc.feeds = cfg.feeds.clone();
        if let Some(dir) = &cfg.snapshot {
            if dir.join("manifest.json").exists() {
                let snap = load_snapshot(dir).map_err(|e| TriageError::Config(format!("snapshot {}: {e}", dir.display())))?;
                svc.set_snapshot(Arc::new(snap));
            }
            svc.snapshot_dir = Some(dir.clone());
        }
        Ok(svc)
    }

    pub fn with_snapshot(self, snapshot: Arc<CatalogSnapshot>) -> Self {
        self.set_snapshot(snapshot);
        self
    }

    pub fn with_feeds(mut self, feeds: FeedsConfig, snapshot_dir: Option<PathBuf>) -> Self {
        self.feeds = Some(feeds);
        self.snapshot_dir = snapshot_dir;
        self
    }

    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn match_config(&self) -> MatchConfig {
        self.config
    }

    fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    fn store(&self) -> MutexGuard<'_, Store> {
        // a panic mid-request leaves SQLite consistent (transactions roll back)
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn snapshot(&self) -> Option<Arc<CatalogSnapshot>> {
        self.snapshot.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn set_snapshot(&self, snapshot: Arc<CatalogSnapshot>) {
        *self.snapshot.write().unwrap_or_else(|p| p.into_inner()) = Some(snapshot);
    }

    fn require_snapshot(&self) -> Result<Arc<CatalogSnapshot>, TriageError> {
        self.snapshot().ok_or(TriageError::NoSnapshot)
    }

    pub fn import_inventory(&self, bytes: &[u8], format: InventoryFormat, source: &str) -> Result<ImportSummary, TriageError> {
        let (records, skipped) = parse_inventory(bytes, format)?;
        let now = self.now();
        let mut store = self.store();
        let mut s = ImportSummary { records: records.len(), inserted: 0, updated: 0, unchanged: 0, skipped };
        for p in &records {
            match store.upsert_product(source, p, now)?.1 {
                Upsert::Inserted => s.inserted += 1,
                Upsert::Updated => s.updated += 1,
                Upsert::Unchanged => s.unchanged += 1,
            }
        }
        info!(records = s.records, inserted = s.inserted, skipped = s.skipped.len(), "inventory imported");
        Ok(s)
    }

    fn view(store: &Store, p: ProductRecord) -> Result<ProductView, TriageError> {
        let assignment = store.active_assignment(p.id)?;
        let status = if assignment.is_some() { ProductStatus::Assigned } else { ProductStatus::Unassigned };
        Ok(ProductView { product: p, status, assignment })
    }

    pub fn products(&self, status: Option<ProductStatus>) -> Result<Vec<ProductView>, TriageError> {
        let store = self.store();
        let mut out = Vec::new();
        for p in store.products()? {
            let v = Self::view(&store, p)?;
            if status.is_none_or(|s| s == v.status) {
                out.push(v);
            }
        }
        Ok(out)
    }

    pub fn product(&self, id: i64) -> Result<ProductView, TriageError> {
        let store = self.store();
        let p = store.product(id)?.ok_or(TriageError::UnknownProduct(id))?;
        Self::view(&store, p)
    }

    /// Ranked dictionary candidates for a product, at most `limit` of them.
    pub fn list_candidates(&self, product_id: i64, limit: Option<usize>) -> Result<CandidateList, TriageError> {
        let product = self.product(product_id)?.product;
        let snapshot = self.require_snapshot()?;
        // a blank product name has no candidates
        let candidates = find_cpe_candidates(&product.inventory(), &snapshot, &self.config).unwrap_or_default();
        let candidates: Vec<CandidateView> = candidates
            .into_iter()
            .take(limit.unwrap_or(usize::MAX))
            .map(|c| CandidateView {
                rank: c.rank,
                uri: c.entry.uri.clone(),
                formatted: c.entry.formatted.clone(),
                title: c.entry.title.clone(),
                vendor_distance: c.vendor_distance,
                product_distance: c.product_distance,
                exact_version: c.version_affinity.exact,
                common_prefix: c.version_affinity.common_prefix,
            })
            .collect();
        Ok(CandidateList { product_id, no_candidates: candidates.is_empty(), candidates })
    }

    /// Makes `req.wfn` the product's CPE and scans it. Assigning the WFN that
    /// is already active changes nothing.
    pub fn assign_cpe(&self, product_id: i64, req: &AssignRequest) -> Result<AssignOutcome, TriageError> {
        req.wfn.validate().map_err(|e| TriageError::InvalidWfn(e.to_string()))?;
        if req.wfn.vendor.as_str().is_none() || req.wfn.product.as_str().is_none() {
            return Err(TriageError::InvalidWfn("vendor and product must be concrete values".into()));
        }
        let assignment = {
            let mut store = self.store();
            store.product(product_id)?.ok_or(TriageError::UnknownProduct(product_id))?;
            if let Some(cur) = store.active_assignment(product_id)? {
                if cur.wfn == req.wfn {
                    return Ok(AssignOutcome { assignment: cur, changed: false, scan: None });
                }
            }
            store.replace_assignment(product_id, &req.wfn, req.source, req.derived_from.as_ref(), &req.user, self.now())?
        };
        let scan = match self.scan_product(product_id) {
            Ok(s) => Some(s),
            Err(TriageError::NoSnapshot) => None,
            Err(e) => return Err(e),
        };
        Ok(AssignOutcome { assignment, changed: true, scan })
    }

    /// Matches the product's assigned CPE against the snapshot and records
    /// new PENDING alerts. Decided alerts are never reopened.
    pub fn scan_product(&self, product_id: i64) -> Result<ScanOutcome, TriageError> {
        self.store().product(product_id)?.ok_or(TriageError::UnknownProduct(product_id))?;
        let snapshot = self.require_snapshot()?;
        self.scan_with(product_id, &snapshot)
    }

    fn scan_with(&self, product_id: i64, snapshot: &CatalogSnapshot) -> Result<ScanOutcome, TriageError> {
        let assignment = {
            let store = self.store();
            store.product(product_id)?.ok_or(TriageError::UnknownProduct(product_id))?;
            store.active_assignment(product_id)?.ok_or(TriageError::Unassigned(product_id))?
        };
        let candidates = search_cves(&assignment.wfn, snapshot, &self.config);
        let groups = group_by_cpe(&candidates);
        let mut group_ids: HashMap<&str, &str> = HashMap::new();
        for g in &groups {
            for id in &g.cve_ids {
                group_ids.insert(id, &g.id);
            }
        }
        let new: Vec<NewAlert> = candidates
            .iter()
            .map(|c| NewAlert {
                cve_id: c.cve.id.clone(),
                origin: c.origin,
                matched_cpes: c.matched_cpes.clone(),
                exact_version: c.exact_version,
                group_id: group_ids[c.cve.id.as_str()].to_string(),
                summary: c.cve.summary.clone(),
                cvss_score: c.cve.cvss_score,
            })
            .collect();
        let mut store = self.store();
        // the assignment may have been replaced while matching ran
        match store.active_assignment(product_id)? {
            Some(cur) if cur.id == assignment.id => {}
            _ => return Err(TriageError::Unassigned(product_id)),
        }
        let ids = store.insert_alerts(product_id, &assignment.wfn, &new, self.now())?;
        let pending = store.alerts(&AlertQuery {
            product_id: Some(product_id),
            current_only: true,
            state: Some(AlertState::Pending),
            since: None,
        })?;
        Ok(ScanOutcome { product_id, assignment: assignment.uri, new_alerts: ids.len(), pending })
    }

    /// Alerts under the product's current assignment.
    pub fn alerts(&self, product_id: i64, state: Option<AlertState>) -> Result<Vec<Alert>, TriageError> {
        let store = self.store();
        store.product(product_id)?.ok_or(TriageError::UnknownProduct(product_id))?;
        store.alerts(&AlertQuery { product_id: Some(product_id), current_only: true, state, since: None })
    }

    /// Alerts grouped by matched CPE set; groups holding an exact-version
    /// match come first, summary matches last.
    pub fn alert_groups(&self, product_id: i64, state: Option<AlertState>) -> Result<Vec<AlertGroup>, TriageError> {
        Ok(group_alerts(self.alerts(product_id, state)?))
    }

    /// Applies one decision to every selected alert, or to none.
    pub fn set_alert_state(&self, req: &DecideRequest) -> Result<Vec<Alert>, TriageError> {
        let decision = req
            .decision
            .ok_or_else(|| TriageError::Format("decision must be CONFIRMED or DISCARDED".into()))?;
        let mut store = self.store();
        let mut ids = req.alert_ids.clone();
        if let Some(group) = &req.group_id {
            let product = req.product_id.ok_or(TriageError::EmptySelection)?;
            store.product(product)?.ok_or(TriageError::UnknownProduct(product))?;
            let members = store.group_alert_ids(product, group)?;
            if members.is_empty() {
                return Err(TriageError::UnknownGroup { product, group: group.clone() });
            }
            ids.extend(members);
        }
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Err(TriageError::EmptySelection);
        }
        let user = if req.user.is_empty() { "anonymous" } else { req.user.as_str() };
        store.decide(&ids, decision, user, self.now())
    }

    /// Fetches the configured feeds, rebuilds the snapshot if any changed and
    /// rescans every assigned product. Failures are reported, never raised;
    /// the previous snapshot stays in place.
    ///
    /// Performs blocking network I/O: call from a blocking context.
    pub fn scheduled_rescan(&self) -> RescanSummary {
        let failed = |msg: String, snap: Option<DateTime<Utc>>| {
            warn!(error = %msg, "rescan failed");
            RescanSummary {
                status: RescanStatus::Failed,
                error: Some(msg),
                snapshot_time: snap,
                products_scanned: 0,
                new_alerts: 0,
                ingest: None,
            }
        };
        let current = self.snapshot();
        let current_time = current.as_ref().map(|s| s.snapshot_time());
        let Some(feeds) = &self.feeds else {
            return failed("no feed sources configured".into(), current_time);
        };
        let mut fetcher_slot = self.fetcher.lock().unwrap_or_else(|p| p.into_inner());
        if fetcher_slot.is_none() {
            match FeedFetcher::new() {
                Ok(f) => *fetcher_slot = Some(f),
                Err(e) => return failed(e.to_string(), current_time),
            }
        }
        let fetcher = fetcher_slot.as_mut().expect("fetcher initialised above");
        let sources: Vec<_> = std::iter::once(feeds.dictionary.clone()).chain(feeds.cve.iter().cloned()).collect();
        let (changed, bodies) = match fetcher.fetch_all(&sources) {
            Ok(r) => r,
            Err(e) => return failed(e.to_string(), current_time),
        };
        if !changed && current.is_some() {
            return RescanSummary {
                status: RescanStatus::Unchanged,
                error: None,
                snapshot_time: current_time,
                products_scanned: 0,
                new_alerts: 0,
                ingest: None,
            };
        }
        let (snapshot, report) = match ingest(bodies[0].as_slice(), bodies[1..].iter().map(|b| b.as_slice()), self.now()) {
            Ok(r) => r,
            Err(e) => return failed(format!("ingest: {e}"), current_time),
        };
        drop(fetcher_slot);
        let snapshot = Arc::new(snapshot);
        let mut error = None;
        if let Some(dir) = &self.snapshot_dir {
            if let Err(e) = save_snapshot(&snapshot, dir) {
                warn!(error = %e, "could not persist snapshot");
                error = Some(format!("snapshot not persisted: {e}"));
            }
        }
        self.set_snapshot(snapshot.clone());
        let (scanned, new_alerts) = match self.rescan_assigned(&snapshot) {
            Ok(r) => r,
            Err(e) => return failed(format!("rescan: {e}"), Some(snapshot.snapshot_time())),
        };
        info!(scanned, new_alerts, "rescan complete");
        RescanSummary {
            status: RescanStatus::Updated,
            error,
            snapshot_time: Some(snapshot.snapshot_time()),
            products_scanned: scanned,
            new_alerts,
            ingest: Some(report),
        }
    }

    /// Scans every assigned product against `snapshot`; returns (products, new alerts).
    pub fn rescan_assigned(&self, snapshot: &CatalogSnapshot) -> Result<(usize, usize), TriageError> {
        let assigned = self.store().active_assignments()?;
        let mut new_alerts = 0;
        let mut scanned = 0;
        for a in assigned {
            match self.scan_with(a.product_id, snapshot) {
                Ok(o) => {
                    scanned += 1;
                    new_alerts += o.new_alerts;
                }
                // reassigned concurrently; its own assign call scans it
                Err(TriageError::Unassigned(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok((scanned, new_alerts))
    }

    pub fn report(&self, filters: &ReportFilters) -> Result<Report, TriageError> {
        let store = self.store();
        let vendor = filters.vendor.as_ref().map(|v| v.to_lowercase());
        let mut totals = Totals::default();
        let mut products = Vec::new();
        let mut alerts = Vec::new();
        for p in store.products()? {
            if vendor.as_ref().is_some_and(|v| !p.vendor.to_lowercase().contains(v.as_str())) {
                continue;
            }
            let view = Self::view(&store, p)?;
            if filters.status.is_some_and(|s| s != view.status) {
                continue;
            }
            let mine = store.alerts(&AlertQuery {
                product_id: Some(view.product.id),
                current_only: true,
                state: filters.state,
                since: filters.since,
            })?;
            let mut counts = Totals::default();
            for a in &mine {
                counts.count(a.state);
                totals.count(a.state);
            }
            totals.products += 1;
            match view.status {
                ProductStatus::Assigned => totals.assigned += 1,
                ProductStatus::Unassigned => totals.unassigned += 1,
            }
            products.push(ProductReport {
                id: view.product.id,
                external_id: view.product.external_id,
                vendor: view.product.vendor,
                product: view.product.product,
                version: view.product.version,
                status: view.status,
                assigned: view.assignment.map(|a| a.uri),
                pending: counts.pending,
                confirmed: counts.confirmed,
                discarded: counts.discarded,
            });
            alerts.extend(mine);
        }
        drop(store);
        Ok(Report { snapshot_time: self.snapshot().map(|s| s.snapshot_time()), totals, products, alerts })
    }
}

/// Groups an ordered alert list by group id, keeping first-appearance order
/// but moving groups with an exact-version alert ahead and summary matches last.
pub fn group_alerts(alerts: Vec<Alert>) -> Vec<AlertGroup> {
    let mut groups: Vec<AlertGroup> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for a in alerts {
        let i = *index.entry(a.group_id.clone()).or_insert_with(|| {
            let mut cpes = a.matched_cpes.clone();
            cpes.sort();
            groups.push(AlertGroup { group_id: a.group_id.clone(), origin: a.origin, cpes, exact_version: false, alerts: Vec::new() });
            groups.len() - 1
        });
        groups[i].exact_version |= a.exact_version;
        groups[i].alerts.push(a);
    }
    groups.sort_by_key(|g| match (g.origin, g.exact_version) {
        (CveOrigin::CpeList, true) => 0,
        (CveOrigin::CpeList, false) => 1,
        (CveOrigin::Summary, _) => 2,
    });
    groups
}
