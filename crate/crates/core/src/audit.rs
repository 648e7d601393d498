//! Consistency audits between the CPE dictionary and the CVE feeds of a snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::feeds::{CatalogSnapshot, DeprecationReason, Diagnostic};
use crate::naming::{bind_to_uri, AttributeValue, CpeUri, Wfn};

pub const REPORT_FORMAT: &str = "iva-audit";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountedIds {
    pub count: usize,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountedUris {
    pub count: usize,
    pub uris: Vec<CpeUri>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeprecationTally {
    pub total: usize,
    pub by_reason: BTreeMap<DeprecationReason, usize>,
    /// Deprecated entries whose replacement is not in the dictionary.
    pub dangling: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DuplicatePair {
    pub dictionary_uri: CpeUri,
    pub feed_uri: CpeUri,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub format: String,
    pub version: u32,
    pub snapshot_time: DateTime<Utc>,
    pub cves_without_cpes: CountedIds,
    pub feed_cpes_missing: CountedUris,
    pub deprecations: DeprecationTally,
    pub semantic_duplicates: Vec<DuplicatePair>,
}

/// CVEs whose vulnerable-software list is empty, by id.
pub fn audit_cves_without_cpes(snapshot: &CatalogSnapshot) -> CountedIds {
    let ids: Vec<String> = snapshot
        .cves()
        .iter()
        .filter(|c| c.vuln_software.is_empty())
        .map(|c| c.id.clone())
        .collect();
    CountedIds { count: ids.len(), ids }
}

fn feed_uris(snapshot: &CatalogSnapshot) -> BTreeMap<CpeUri, &Wfn> {
    snapshot
        .cves()
        .iter()
        .flat_map(|c| &c.vuln_software)
        .map(|v| (bind_to_uri(&v.wfn), &v.wfn))
        .collect()
}

/// Canonical feed CPE URIs that have no dictionary entry.
pub fn audit_missing_dictionary_cpes(snapshot: &CatalogSnapshot) -> CountedUris {
    let uris: Vec<CpeUri> = feed_uris(snapshot)
        .into_keys()
        .filter(|u| snapshot.entry_index(u).is_none())
        .collect();
    CountedUris { count: uris.len(), uris }
}

/// Deprecated dictionary entries by declared reason, plus those pointing at
/// a replacement the dictionary lacks.
pub fn audit_deprecations(snapshot: &CatalogSnapshot) -> DeprecationTally {
    let mut tally = DeprecationTally::default();
    for e in snapshot.dictionary().iter().filter(|e| e.deprecated) {
        tally.total += 1;
        *tally
            .by_reason
            .entry(e.deprecation_reason.unwrap_or(DeprecationReason::Unspecified))
            .or_default() += 1;
        if let Some(target) = &e.deprecated_by {
            if snapshot.entry_index(target).is_none() {
                tally.dangling.push(Diagnostic {
                    subject: e.uri.to_string(),
                    reason: format!("deprecated_by target {target} is not in the dictionary"),
                });
            }
        }
    }
    tally
}

/// Folds a concrete update into the version (`1.4.0` + `beta1` → `1.4.0_beta1`).
pub fn normalize_version_update(wfn: &Wfn) -> Wfn {
    let mut n = wfn.clone();
    if let (AttributeValue::Value(v), AttributeValue::Value(u)) = (&wfn.version, &wfn.update) {
        n.version = AttributeValue::Value(format!("{v}_{u}"));
        n.update = AttributeValue::Any;
    }
    n
}

/// Dictionary/feed URI pairs that differ as written but agree once the
/// update is folded into the version. Each unordered pair appears once.
pub fn detect_semantic_duplicates(snapshot: &CatalogSnapshot) -> Vec<DuplicatePair> {
    let mut dict_by_key: BTreeMap<Wfn, Vec<CpeUri>> = BTreeMap::new();
    for e in snapshot.dictionary() {
        dict_by_key.entry(normalize_version_update(&e.wfn)).or_default().push(bind_to_uri(&e.wfn));
    }
    let mut seen: BTreeSet<(CpeUri, CpeUri)> = BTreeSet::new();
    let mut out = Vec::new();
    for (feed_uri, wfn) in feed_uris(snapshot) {
        let Some(dict) = dict_by_key.get(&normalize_version_update(wfn)) else { continue };
        for d in dict.iter().filter(|d| **d != feed_uri) {
            let key = if *d < feed_uri { (d.clone(), feed_uri.clone()) } else { (feed_uri.clone(), d.clone()) };
            if seen.insert(key) {
                out.push(DuplicatePair { dictionary_uri: d.clone(), feed_uri: feed_uri.clone() });
            }
        }
    }
    out.sort();
    out
}

/// Runs every audit.
pub fn audit_snapshot(snapshot: &CatalogSnapshot) -> ConsistencyReport {
    ConsistencyReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        snapshot_time: snapshot.snapshot_time(),
        cves_without_cpes: audit_cves_without_cpes(snapshot),
        feed_cpes_missing: audit_missing_dictionary_cpes(snapshot),
        deprecations: audit_deprecations(snapshot),
        semantic_duplicates: detect_semantic_duplicates(snapshot),
    }
}

impl ConsistencyReport {
    /// Human-readable summary, one figure per line.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "snapshot time:             {}", self.snapshot_time.to_rfc3339());
        let _ = writeln!(s, "CVEs without CPEs:         {}", self.cves_without_cpes.count);
        let _ = writeln!(s, "feed CPEs not in dictionary: {}", self.feed_cpes_missing.count);
        let _ = writeln!(s, "deprecated entries:        {}", self.deprecations.total);
        for (reason, n) in &self.deprecations.by_reason {
            let _ = writeln!(s, "  {:<24} {n}", reason.as_str());
        }
        let _ = writeln!(s, "dangling deprecations:     {}", self.deprecations.dangling.len());
        let _ = writeln!(s, "semantic duplicates:       {}", self.semantic_duplicates.len());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeds::{build_snapshot, CpeDictEntry, CveEntry, VulnerableCpe};
    use crate::naming::unbind_uri;

    fn entry(uri: &str) -> CpeDictEntry {
        let uri = CpeUri::new(uri).unwrap();
        CpeDictEntry {
            wfn: unbind_uri(&uri).unwrap(),
            uri,
            formatted: None,
            title: String::new(),
            deprecated: false,
            deprecated_by: None,
            deprecation_reason: None,
        }
    }

    fn cve(id: &str, uris: &[&str]) -> CveEntry {
        CveEntry {
            id: id.into(),
            summary: String::new(),
            published: None,
            cvss_score: None,
            vuln_software: uris.iter().map(|u| VulnerableCpe::parse(CpeUri::new(*u).unwrap()).unwrap()).collect(),
        }
    }

    fn snap(dict: Vec<CpeDictEntry>, cves: Vec<CveEntry>) -> CatalogSnapshot {
        build_snapshot(dict, cves, DateTime::parse_from_rfc3339("2017-02-14T00:00:00Z").unwrap().into()).unwrap()
    }

    #[test]
    fn cpe_less_cves() {
        let cves = (0..10)
            .map(|i| cve(&format!("CVE-2016-{:04}", i + 1), if i % 3 == 0 && i < 9 { &[] } else { &["cpe:/a:x:y:1"] }))
            .collect();
        let r = audit_cves_without_cpes(&snap(Vec::new(), cves));
        assert_eq!(r.count, 3);
        assert_eq!(r.ids, ["CVE-2016-0001", "CVE-2016-0004", "CVE-2016-0007"]);
        assert_eq!(audit_cves_without_cpes(&snap(Vec::new(), Vec::new())).count, 0);
    }

    #[test]
    fn missing_from_dictionary() {
        let s = snap(
            vec![entry("cpe:/a:a:a:1"), entry("cpe:/a:b:b:1")],
            vec![cve("CVE-2016-0001", &["cpe:/a:a:a:1", "cpe:/a:c:c:1"]), cve("CVE-2016-0002", &["cpe:/a:b:b:1", "cpe:/a:d:d:1", "cpe:/a:c:c:1"])],
        );
        let r = audit_missing_dictionary_cpes(&s);
        assert_eq!(r.count, 2);
        assert_eq!(r.uris, [CpeUri::new("cpe:/a:c:c:1").unwrap(), CpeUri::new("cpe:/a:d:d:1").unwrap()]);
    }

    #[test]
    fn deprecation_tally() {
        let mut old = entry("cpe:/a:adobe:flash_playe_for_linux:11.2");
        old.deprecated = true;
        old.deprecated_by = Some(CpeUri::new("cpe:/a:adobe:flash_player_for_linux:11.2").unwrap());
        old.deprecation_reason = Some(DeprecationReason::NameCorrection);
        let s = snap(vec![old.clone(), entry("cpe:/a:adobe:flash_player_for_linux:11.2")], Vec::new());
        let t = audit_deprecations(&s);
        assert_eq!((t.total, t.by_reason.get(&DeprecationReason::NameCorrection).copied()), (1, Some(1)));
        assert!(t.dangling.is_empty());

        let t = audit_deprecations(&snap(vec![old], Vec::new()));
        assert_eq!(t.dangling.len(), 1);
        assert_eq!(audit_deprecations(&snap(vec![entry("cpe:/a:x:y")], Vec::new())), DeprecationTally::default());
    }

    #[test]
    fn version_update_duplicates() {
        let s = snap(
            vec![entry("cpe:/a:digium:asterisk:1.4.0:beta1"), entry("cpe:/a:digium:asterisk:1.4.0")],
            vec![cve("CVE-2016-0001", &["cpe:/a:digium:asterisk:1.4.0_beta1", "cpe:/a:digium:asterisk:1.4.0"])],
        );
        let d = detect_semantic_duplicates(&s);
        assert_eq!(
            d,
            [DuplicatePair {
                dictionary_uri: CpeUri::new("cpe:/a:digium:asterisk:1.4.0:beta1").unwrap(),
                feed_uri: CpeUri::new("cpe:/a:digium:asterisk:1.4.0_beta1").unwrap(),
            }]
        );
    }

    #[test]
    fn report_is_deterministic() {
        let s = snap(vec![entry("cpe:/a:digium:asterisk:1.4.0:beta1")], vec![cve("CVE-2016-0001", &["cpe:/a:digium:asterisk:1.4.0_beta1"]), cve("CVE-2016-0002", &[])]);
        let a = serde_json::to_string(&audit_snapshot(&s)).unwrap();
        let b = serde_json::to_string(&audit_snapshot(&s)).unwrap();
        assert_eq!(a, b);
        let r: ConsistencyReport = serde_json::from_str(&a).unwrap();
        assert_eq!(r.version, REPORT_VERSION);
        assert!(r.summary().contains("semantic duplicates:       1"));
    }
}
