//! SQLite-backed persistence for inventory, assignments and alerts.
//!
//! Schema (version 1):
//!
//! - `meta(key, value)` — holds `schema_version`.
//! - `products` — one row per (source, external_id) with first/last seen times.
//! - `assignments` — CPE assignments; at most one row per product has `active = 1`.
//! - `alerts` — one row per (product, CVE, assignment WFN). Rows of earlier
//!   assignments are kept once decided, so re-assigning a WFN restores its
//!   decisions while a different WFN starts triage afresh.

use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use iva_core::matching::{CveOrigin, InventoryProduct};
use iva_core::naming::{bind_to_formatted_string, parse_any, CpeUri, FormattedString, Wfn};
use rusqlite::{params, Connection, OptionalExtension, Row, Transaction};
use serde::{Deserialize, Serialize};

use crate::error::TriageError;

pub const SCHEMA_VERSION: i64 = 1;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS products (
    id INTEGER PRIMARY KEY,
    source TEXT NOT NULL,
    external_id TEXT NOT NULL,
    vendor TEXT NOT NULL,
    product TEXT NOT NULL,
    version TEXT NOT NULL,
    first_seen TEXT NOT NULL,
    last_seen TEXT NOT NULL,
    UNIQUE (source, external_id)
);
CREATE TABLE IF NOT EXISTS assignments (
    id INTEGER PRIMARY KEY,
    product_id INTEGER NOT NULL REFERENCES products(id),
    wfn TEXT NOT NULL,
    source TEXT NOT NULL,
    derived_from TEXT,
    assigned_at TEXT NOT NULL,
    assigned_by TEXT NOT NULL,
    active INTEGER NOT NULL
);
CREATE UNIQUE INDEX IF NOT EXISTS one_active_assignment ON assignments(product_id) WHERE active = 1;
CREATE TABLE IF NOT EXISTS alerts (
    id INTEGER PRIMARY KEY,
    product_id INTEGER NOT NULL REFERENCES products(id),
    assignment_wfn TEXT NOT NULL,
    cve_id TEXT NOT NULL,
    origin TEXT NOT NULL,
    matched_cpes TEXT NOT NULL,
    exact_version INTEGER NOT NULL,
    group_id TEXT NOT NULL,
    summary TEXT NOT NULL,
    cvss_score REAL,
    state TEXT NOT NULL,
    created_at TEXT NOT NULL,
    decided_by TEXT,
    decided_at TEXT,
    UNIQUE (product_id, cve_id, assignment_wfn)
);
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlertState {
    Pending,
    Confirmed,
    Discarded,
}

impl AlertState {
    pub fn as_str(self) -> &'static str {
        match self {
            AlertState::Pending => "PENDING",
            AlertState::Confirmed => "CONFIRMED",
            AlertState::Discarded => "DISCARDED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PENDING" => Some(AlertState::Pending),
            "CONFIRMED" => Some(AlertState::Confirmed),
            "DISCARDED" => Some(AlertState::Discarded),
            _ => None,
        }
    }

    /// Only PENDING alerts can change state, and only to a decision.
    pub fn can_become(self, next: AlertState) -> bool {
        self == AlertState::Pending && next != AlertState::Pending
    }
}

/// A triage decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Confirmed,
    Discarded,
}

impl Decision {
    pub fn state(self) -> AlertState {
        match self {
            Decision::Confirmed => AlertState::Confirmed,
            Decision::Discarded => AlertState::Discarded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AssignmentSource {
    CandidateSelected,
    UserEdited,
}

impl AssignmentSource {
    fn as_str(self) -> &'static str {
        match self {
            AssignmentSource::CandidateSelected => "CANDIDATE_SELECTED",
            AssignmentSource::UserEdited => "USER_EDITED",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "CANDIDATE_SELECTED" => Some(AssignmentSource::CandidateSelected),
            "USER_EDITED" => Some(AssignmentSource::UserEdited),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub id: i64,
    pub source: String,
    pub external_id: String,
    pub vendor: String,
    pub product: String,
    pub version: String,
    pub first_seen: DateTime<Utc>,
    pub last_seen: DateTime<Utc>,
}

impl ProductRecord {
    pub fn inventory(&self) -> InventoryProduct {
        InventoryProduct::new(&self.external_id, &self.vendor, &self.product, &self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub id: i64,
    pub product_id: i64,
    pub wfn: Wfn,
    pub uri: CpeUri,
    pub source: AssignmentSource,
    /// Candidate the assignment was derived from, when edited by hand.
    pub derived_from: Option<CpeUri>,
    pub assigned_at: DateTime<Utc>,
    pub assigned_by: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub id: i64,
    pub product_id: i64,
    pub cve_id: String,
    pub origin: CveOrigin,
    pub matched_cpes: Vec<CpeUri>,
    pub exact_version: bool,
    pub group_id: String,
    pub summary: String,
    pub cvss_score: Option<f64>,
    pub state: AlertState,
    pub created_at: DateTime<Utc>,
    pub decided_by: Option<String>,
    pub decided_at: Option<DateTime<Utc>>,
}

/// A match to be recorded as an alert.
#[derive(Debug, Clone)]
pub struct NewAlert {
    pub cve_id: String,
    pub origin: CveOrigin,
    pub matched_cpes: Vec<CpeUri>,
    pub exact_version: bool,
    pub group_id: String,
    pub summary: String,
    pub cvss_score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upsert {
    Inserted,
    Updated,
    Unchanged,
}

#[derive(Debug, Clone, Default)]
pub struct AlertQuery {
    pub product_id: Option<i64>,
    /// Restrict to alerts raised under each product's active assignment.
    pub current_only: bool,
    pub state: Option<AlertState>,
    pub since: Option<DateTime<Utc>>,
}

pub(crate) fn ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Micros, true)
}

fn parse_ts(s: &str) -> rusqlite::Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e)))
}

fn conversion(msg: String) -> rusqlite::Error {
    rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, msg.into())
}

fn wfn_key(wfn: &Wfn) -> String {
    bind_to_formatted_string(wfn).as_str().to_string()
}

fn origin_str(o: CveOrigin) -> &'static str {
    o.as_str()
}

fn parse_origin(s: &str) -> rusqlite::Result<CveOrigin> {
    match s {
        "CPE_LIST" => Ok(CveOrigin::CpeList),
        "SUMMARY" => Ok(CveOrigin::Summary),
        other => Err(conversion(format!("unknown origin {other}"))),
    }
}

fn product_row(r: &Row) -> rusqlite::Result<ProductRecord> {
    Ok(ProductRecord {
        id: r.get(0)?,
        source: r.get(1)?,
        external_id: r.get(2)?,
        vendor: r.get(3)?,
        product: r.get(4)?,
        version: r.get(5)?,
        first_seen: parse_ts(&r.get::<_, String>(6)?)?,
        last_seen: parse_ts(&r.get::<_, String>(7)?)?,
    })
}

const PRODUCT_COLS: &str = "id, source, external_id, vendor, product, version, first_seen, last_seen";

fn assignment_row(r: &Row) -> rusqlite::Result<Assignment> {
    let text: String = r.get(2)?;
    let wfn = FormattedString::new(text.clone())
        .and_then(|f| f.to_wfn())
        .map_err(|e| conversion(format!("stored WFN {text}: {e}")))?;
    let source: String = r.get(3)?;
    let derived: Option<String> = r.get(4)?;
    Ok(Assignment {
        id: r.get(0)?,
        product_id: r.get(1)?,
        uri: iva_core::naming::bind_to_uri(&wfn),
        wfn,
        source: AssignmentSource::parse(&source).ok_or_else(|| conversion(format!("unknown source {source}")))?,
        derived_from: derived.map(CpeUri::new).transpose().map_err(|e| conversion(e.to_string()))?,
        assigned_at: parse_ts(&r.get::<_, String>(5)?)?,
        assigned_by: r.get(6)?,
    })
}

const ASSIGNMENT_COLS: &str = "id, product_id, wfn, source, derived_from, assigned_at, assigned_by";

fn alert_row(r: &Row) -> rusqlite::Result<Alert> {
    let cpes: String = r.get(4)?;
    let state: String = r.get(10)?;
    Ok(Alert {
        id: r.get(0)?,
        product_id: r.get(1)?,
        cve_id: r.get(2)?,
        origin: parse_origin(&r.get::<_, String>(3)?)?,
        matched_cpes: serde_json::from_str(&cpes).map_err(|e| conversion(e.to_string()))?,
        exact_version: r.get(5)?,
        group_id: r.get(6)?,
        summary: r.get(7)?,
        cvss_score: r.get(8)?,
        created_at: parse_ts(&r.get::<_, String>(9)?)?,
        state: AlertState::parse(&state).ok_or_else(|| conversion(format!("unknown state {state}")))?,
        decided_by: r.get(11)?,
        decided_at: r.get::<_, Option<String>>(12)?.as_deref().map(parse_ts).transpose()?,
    })
}

const ALERT_COLS: &str = "a.id, a.product_id, a.cve_id, a.origin, a.matched_cpes, a.exact_version, a.group_id, a.summary, \
     a.cvss_score, a.created_at, a.state, a.decided_by, a.decided_at";

/// Order used for every alert listing: exact-version CPE-list matches,
/// other CPE-list matches, summary matches; then CVE id.
const ALERT_ORDER: &str = "a.product_id, CASE WHEN a.origin = 'SUMMARY' THEN 2 WHEN a.exact_version = 1 THEN 0 ELSE 1 END, a.cve_id, a.id";

pub struct Store {
    conn: Connection,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").finish_non_exhaustive()
    }
}

impl Store {
    pub fn open(path: &Path) -> Result<Store, TriageError> {
        Self::init(Connection::open(path)?)
    }

    pub fn open_in_memory() -> Result<Store, TriageError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Store, TriageError> {
        conn.pragma_update(None, "foreign_keys", true)?;
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        conn.execute_batch(SCHEMA)?;
        let version: Option<String> =
            conn.query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0)).optional()?;
        match version {
            None => {
                conn.execute("INSERT INTO meta (key, value) VALUES ('schema_version', ?1)", [SCHEMA_VERSION.to_string()])?;
            }
            Some(v) if v == SCHEMA_VERSION.to_string() => {}
            Some(v) => return Err(TriageError::Corrupt(format!("unsupported store schema version {v}"))),
        }
        Ok(Store { conn })
    }

    pub fn upsert_product(&mut self, source: &str, p: &InventoryProduct, now: DateTime<Utc>) -> Result<(i64, Upsert), TriageError> {
        let tx = self.conn.transaction()?;
        let existing: Option<(i64, String, String, String)> = tx
            .query_row(
                "SELECT id, vendor, product, version FROM products WHERE source = ?1 AND external_id = ?2",
                params![source, p.external_id],
                |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?)),
            )
            .optional()?;
        let out = match existing {
            None => {
                tx.execute(
                    "INSERT INTO products (source, external_id, vendor, product, version, first_seen, last_seen) \
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?6)",
                    params![source, p.external_id, p.vendor_raw, p.product_raw, p.version_raw, ts(now)],
                )?;
                (tx.last_insert_rowid(), Upsert::Inserted)
            }
            Some((id, v, pr, ver)) => {
                let same = v == p.vendor_raw && pr == p.product_raw && ver == p.version_raw;
                tx.execute(
                    "UPDATE products SET vendor = ?2, product = ?3, version = ?4, last_seen = ?5 WHERE id = ?1",
                    params![id, p.vendor_raw, p.product_raw, p.version_raw, ts(now)],
                )?;
                (id, if same { Upsert::Unchanged } else { Upsert::Updated })
            }
        };
        tx.commit()?;
        Ok(out)
    }

    pub fn product(&self, id: i64) -> Result<Option<ProductRecord>, TriageError> {
        Ok(self
            .conn
            .query_row(&format!("SELECT {PRODUCT_COLS} FROM products WHERE id = ?1"), [id], product_row)
            .optional()?)
    }

    pub fn products(&self) -> Result<Vec<ProductRecord>, TriageError> {
        let mut st = self.conn.prepare(&format!("SELECT {PRODUCT_COLS} FROM products ORDER BY id"))?;
        let rows = st.query_map([], product_row)?.collect::<Result<_, _>>()?;
        Ok(rows)
    }

    pub fn active_assignment(&self, product_id: i64) -> Result<Option<Assignment>, TriageError> {
        Ok(self
            .conn
            .query_row(
                &format!("SELECT {ASSIGNMENT_COLS} FROM assignments WHERE product_id = ?1 AND active = 1"),
                [product_id],
                assignment_row,
            )
            .optional()?)
    }

    /// All active assignments, by product id.
    pub fn active_assignments(&self) -> Result<Vec<Assignment>, TriageError> {
        let mut st = self
            .conn
            .prepare(&format!("SELECT {ASSIGNMENT_COLS} FROM assignments WHERE active = 1 ORDER BY product_id"))?;
        let rows = st.query_map([], assignment_row)?.collect::<Result<_, _>>()?;
        Ok(rows)
    }

    /// Makes `wfn` the product's active assignment. Pending alerts raised
    /// under the previous assignment are dropped; decided ones are kept.
    pub fn replace_assignment(
        &mut self,
        product_id: i64,
        wfn: &Wfn,
        source: AssignmentSource,
        derived_from: Option<&CpeUri>,
        user: &str,
        now: DateTime<Utc>,
    ) -> Result<Assignment, TriageError> {
        let tx = self.conn.transaction()?;
        let prior: Option<String> = tx
            .query_row("SELECT wfn FROM assignments WHERE product_id = ?1 AND active = 1", [product_id], |r| r.get(0))
            .optional()?;
        if let Some(prior) = prior {
            tx.execute(
                "DELETE FROM alerts WHERE product_id = ?1 AND assignment_wfn = ?2 AND state = 'PENDING'",
                params![product_id, prior],
            )?;
            tx.execute("UPDATE assignments SET active = 0 WHERE product_id = ?1 AND active = 1", [product_id])?;
        }
        tx.execute(
            "INSERT INTO assignments (product_id, wfn, source, derived_from, assigned_at, assigned_by, active) \
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, 1)",
            params![product_id, wfn_key(wfn), source.as_str(), derived_from.map(|u| u.as_str()), ts(now), user],
        )?;
        let id = tx.last_insert_rowid();
        let a = tx.query_row(&format!("SELECT {ASSIGNMENT_COLS} FROM assignments WHERE id = ?1"), [id], assignment_row)?;
        tx.commit()?;
        Ok(a)
    }

    /// Records alerts for the product's assignment `wfn`, skipping any
    /// (product, CVE, WFN) already present in whatever state. Returns the ids
    /// of the new rows.
    pub fn insert_alerts(&mut self, product_id: i64, wfn: &Wfn, alerts: &[NewAlert], now: DateTime<Utc>) -> Result<Vec<i64>, TriageError> {
        let tx = self.conn.transaction()?;
        let key = wfn_key(wfn);
        let mut ids = Vec::new();
        {
            let mut st = tx.prepare(
                "INSERT OR IGNORE INTO alerts (product_id, assignment_wfn, cve_id, origin, matched_cpes, exact_version, \
                 group_id, summary, cvss_score, state, created_at) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, 'PENDING', ?10)",
            )?;
            for a in alerts {
                let cpes = serde_json::to_string(&a.matched_cpes).map_err(|e| TriageError::Corrupt(e.to_string()))?;
                let n = st.execute(params![
                    product_id,
                    key,
                    a.cve_id,
                    origin_str(a.origin),
                    cpes,
                    a.exact_version,
                    a.group_id,
                    a.summary,
                    a.cvss_score,
                    ts(now)
                ])?;
                if n == 1 {
                    ids.push(tx.last_insert_rowid());
                }
            }
        }
        tx.commit()?;
        Ok(ids)
    }

    pub fn alerts(&self, q: &AlertQuery) -> Result<Vec<Alert>, TriageError> {
        let mut sql = format!("SELECT {ALERT_COLS} FROM alerts a");
        let mut clauses: Vec<String> = Vec::new();
        let mut args: Vec<rusqlite::types::Value> = Vec::new();
        if q.current_only {
            sql.push_str(" JOIN assignments s ON s.product_id = a.product_id AND s.active = 1 AND s.wfn = a.assignment_wfn");
        }
        if let Some(p) = q.product_id {
            args.push(p.into());
            clauses.push(format!("a.product_id = ?{}", args.len()));
        }
        if let Some(s) = q.state {
            args.push(s.as_str().to_string().into());
            clauses.push(format!("a.state = ?{}", args.len()));
        }
        if let Some(t) = q.since {
            args.push(ts(t).into());
            clauses.push(format!("a.created_at >= ?{}", args.len()));
        }
        if !clauses.is_empty() {
            sql.push_str(" WHERE ");
            sql.push_str(&clauses.join(" AND "));
        }
        sql.push_str(" ORDER BY ");
        sql.push_str(ALERT_ORDER);
        let mut st = self.conn.prepare(&sql)?;
        let rows = st.query_map(rusqlite::params_from_iter(args), alert_row)?.collect::<Result<_, _>>()?;
        Ok(rows)
    }

    /// Ids of the alerts in a group under the product's active assignment.
    pub fn group_alert_ids(&self, product_id: i64, group_id: &str) -> Result<Vec<i64>, TriageError> {
        let mut st = self.conn.prepare(
            "SELECT a.id FROM alerts a JOIN assignments s ON s.product_id = a.product_id AND s.active = 1 \
             AND s.wfn = a.assignment_wfn WHERE a.product_id = ?1 AND a.group_id = ?2 ORDER BY a.id",
        )?;
        let ids = st.query_map(params![product_id, group_id], |r| r.get(0))?.collect::<Result<_, _>>()?;
        Ok(ids)
    }

    /// Moves every listed alert from PENDING to the decision, or none of them.
    pub fn decide(&mut self, ids: &[i64], decision: Decision, user: &str, now: DateTime<Utc>) -> Result<Vec<Alert>, TriageError> {
        let tx = self.conn.transaction()?;
        let current = load_alerts(&tx, ids)?;
        let unknown: Vec<i64> = ids.iter().copied().filter(|id| !current.iter().any(|a| a.id == *id)).collect();
        if !unknown.is_empty() {
            return Err(TriageError::UnknownAlert(unknown));
        }
        let next = decision.state();
        let decided: Vec<i64> = current.iter().filter(|a| !a.state.can_become(next)).map(|a| a.id).collect();
        if !decided.is_empty() {
            return Err(TriageError::AlreadyDecided(decided));
        }
        for id in ids {
            tx.execute(
                "UPDATE alerts SET state = ?2, decided_by = ?3, decided_at = ?4 WHERE id = ?1 AND state = 'PENDING'",
                params![id, next.as_str(), user, ts(now)],
            )?;
        }
        let updated = load_alerts(&tx, ids)?;
        tx.commit()?;
        Ok(updated)
    }
}

fn load_alerts(tx: &Transaction, ids: &[i64]) -> Result<Vec<Alert>, TriageError> {
    let mut st = tx.prepare(&format!("SELECT {ALERT_COLS} FROM alerts a WHERE a.id = ?1"))?;
    let mut out = Vec::new();
    for id in ids {
        if let Some(a) = st.query_row([id], alert_row).optional()? {
            out.push(a);
        }
    }
    out.sort_by_key(|a| a.id);
    out.dedup_by_key(|a| a.id);
    Ok(out)
}

/// Parses a CPE given in any binding (URI, formatted string or WFN text).
pub fn parse_cpe(text: &str) -> Result<Wfn, TriageError> {
    parse_any(text).map_err(|e| TriageError::InvalidWfn(e.to_string()))
}
