//! CVE matching for an assigned CPE: through the CVEs' CPE lists and, for
//! CVEs without any CPE, through their summary text.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::version::{parse_version, version_match};
use super::{similar, MatchConfig};
use crate::feeds::{CatalogSnapshot, CveEntry};
use crate::naming::{CpeUri, Wfn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CveOrigin {
    CpeList,
    Summary,
}

impl CveOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            CveOrigin::CpeList => "CPE_LIST",
            CveOrigin::Summary => "SUMMARY",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CveCandidate {
    pub cve: CveEntry,
    pub origin: CveOrigin,
    /// CPEs of the CVE that matched; empty for summary matches.
    pub matched_cpes: Vec<CpeUri>,
    /// Some matched CPE has the product version verbatim or by wildcard.
    pub exact_version: bool,
}

/// Memoised `similar()` against one fixed name.
struct Similar<'a> {
    target: &'a str,
    config: &'a MatchConfig,
    seen: HashMap<String, bool>,
}

impl<'a> Similar<'a> {
    fn new(target: &'a str, config: &'a MatchConfig) -> Self {
        Similar { target, config, seen: HashMap::new() }
    }

    fn test(&mut self, value: &str) -> bool {
        if let Some(&r) = self.seen.get(value) {
            return r;
        }
        let r = similar(value, self.target, self.config);
        self.seen.insert(value.to_string(), r);
        r
    }
}

/// CVEs listing a CPE whose vendor and product are similar to the assigned
/// ones and whose version matches. Exact-version candidates come first.
///
/// Only vendor, product and version take part in the comparison. Returns
/// nothing unless the assigned vendor and product are concrete values.
pub fn search_cves_by_cpe(assigned: &Wfn, snapshot: &CatalogSnapshot, config: &MatchConfig) -> Vec<CveCandidate> {
    let (Some(vendor), Some(product)) = (assigned.vendor.as_str(), assigned.product.as_str()) else {
        return Vec::new();
    };
    let sw_version = parse_version(assigned.version.as_str().unwrap_or(""));
    let mut vendor_sim = Similar::new(vendor, config);
    let mut product_sim = Similar::new(product, config);

    let mut out = Vec::new();
    for cve in snapshot.cves() {
        let mut matched = Vec::new();
        let mut exact = false;
        for cpe in &cve.vuln_software {
            let (Some(v), Some(p)) = (cpe.wfn.vendor.as_str(), cpe.wfn.product.as_str()) else { continue };
            if !product_sim.test(p) || !vendor_sim.test(v) {
                continue;
            }
            if let Some(m) = version_match(&sw_version, &cpe.wfn.version) {
                exact |= m.is_exact();
                matched.push(cpe.uri.clone());
            }
        }
        if !matched.is_empty() {
            out.push(CveCandidate { cve: cve.clone(), origin: CveOrigin::CpeList, matched_cpes: matched, exact_version: exact });
        }
    }
    out.sort_by_key(|c| !c.exact_version);
    out
}

const SUMMARY_PUNCTUATION: &[char] = &['.', ',', ';', ':', '(', ')', '[', ']', '\'', '"', '!', '?'];

/// Lowercased whitespace tokens with surrounding punctuation removed.
pub fn summary_words(summary: &str) -> Vec<String> {
    summary
        .split_whitespace()
        .map(|w| w.trim_matches(SUMMARY_PUNCTUATION).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Runs of `n` consecutive words joined with `_`, matching how multi-word
/// names are written in CPEs (`rational_doors_next_generation`).
fn windows(words: &[String], n: usize) -> impl Iterator<Item = String> + '_ {
    words.windows(n.max(1)).map(|w| w.join("_"))
}

fn name_len(name: &str) -> usize {
    name.split('_').filter(|t| !t.is_empty()).count().max(1)
}

fn summary_matches(words: &[String], vendor: &str, product: &str, config: &MatchConfig) -> bool {
    let (nv, np) = (name_len(vendor), name_len(product));
    if config.strict_summary {
        let mut sizes = vec![np];
        if nv != np {
            sizes.push(nv);
        }
        return sizes.into_iter().any(|n| {
            windows(words, n).any(|w| similar(&w, product, config) && similar(&w, vendor, config))
        });
    }
    windows(words, np).any(|w| similar(&w, product, config))
        && windows(words, nv).any(|w| similar(&w, vendor, config))
}

/// CVEs without any CPE whose summary names both the assigned product and
/// vendor (each within the distance threshold).
///
/// Multi-word CPE names are compared against runs of as many consecutive
/// summary words. With `strict_summary`, one run must be similar to both.
pub fn search_cves_by_summary(assigned: &Wfn, snapshot: &CatalogSnapshot, config: &MatchConfig) -> Vec<CveCandidate> {
    let (Some(vendor), Some(product)) = (assigned.vendor.as_str(), assigned.product.as_str()) else {
        return Vec::new();
    };
    snapshot
        .cves()
        .iter()
        .filter(|c| c.vuln_software.is_empty())
        .filter(|c| summary_matches(&summary_words(&c.summary), vendor, product, config))
        .map(|c| CveCandidate { cve: c.clone(), origin: CveOrigin::Summary, matched_cpes: Vec::new(), exact_version: false })
        .collect()
}

/// Union keyed by CVE id. A CPE-list candidate wins over a summary one.
/// Order: exact-version CPE-list, other CPE-list, summary; by id within each.
pub fn merge_candidates(a: Vec<CveCandidate>, b: Vec<CveCandidate>) -> Vec<CveCandidate> {
    let mut by_id: BTreeMap<String, CveCandidate> = BTreeMap::new();
    for c in a.into_iter().chain(b) {
        match by_id.get(&c.cve.id) {
            Some(cur) if cur.origin == CveOrigin::CpeList => {}
            Some(_) if c.origin == CveOrigin::Summary => {}
            _ => {
                by_id.insert(c.cve.id.clone(), c);
            }
        }
    }
    let mut out: Vec<CveCandidate> = by_id.into_values().collect();
    out.sort_by_key(|c| match (c.origin, c.exact_version) {
        (CveOrigin::CpeList, true) => 0,
        (CveOrigin::CpeList, false) => 1,
        (CveOrigin::Summary, _) => 2,
    });
    out
}

/// Both searches, merged.
pub fn search_cves(assigned: &Wfn, snapshot: &CatalogSnapshot, config: &MatchConfig) -> Vec<CveCandidate> {
    merge_candidates(search_cves_by_cpe(assigned, snapshot, config), search_cves_by_summary(assigned, snapshot, config))
}

/// Group id used for all summary-origin candidates of a product.
pub const SUMMARY_GROUP_ID: &str = "summary";

/// CVEs sharing one matched CPE set, for confirming or discarding together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CveGroup {
    /// Stable across scans: derived from the CPE set.
    pub id: String,
    pub origin: CveOrigin,
    pub cpes: Vec<CpeUri>,
    pub cve_ids: Vec<String>,
    pub exact_version: bool,
}

fn group_id(cpes: &[CpeUri]) -> String {
    let mut h = Sha256::new();
    for c in cpes {
        h.update(c.as_str().as_bytes());
        h.update([0]);
    }
    let hex: String = h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("g-{hex}")
}

/// Groups candidates by their matched CPE set; summary candidates form one
/// group. Groups keep the order of their first candidate.
pub fn group_by_cpe(candidates: &[CveCandidate]) -> Vec<CveGroup> {
    let mut groups: Vec<CveGroup> = Vec::new();
    let mut index: HashMap<Vec<CpeUri>, usize> = HashMap::new();
    let mut summary: Option<CveGroup> = None;
    for c in candidates {
        if c.origin == CveOrigin::Summary {
            summary
                .get_or_insert_with(|| CveGroup {
                    id: SUMMARY_GROUP_ID.into(),
                    origin: CveOrigin::Summary,
                    cpes: Vec::new(),
                    cve_ids: Vec::new(),
                    exact_version: false,
                })
                .cve_ids
                .push(c.cve.id.clone());
            continue;
        }
        let mut key = c.matched_cpes.clone();
        key.sort();
        key.dedup();
        let i = *index.entry(key.clone()).or_insert_with(|| {
            groups.push(CveGroup {
                id: group_id(&key),
                origin: CveOrigin::CpeList,
                cpes: key,
                cve_ids: Vec::new(),
                exact_version: false,
            });
            groups.len() - 1
        });
        groups[i].cve_ids.push(c.cve.id.clone());
        groups[i].exact_version |= c.exact_version;
    }
    groups.extend(summary);
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeds::{build_snapshot, VulnerableCpe};
    use crate::naming::unbind_uri;
    use chrono::Utc;

    fn cve(id: &str, summary: &str, uris: &[&str]) -> CveEntry {
        CveEntry {
            id: id.into(),
            summary: summary.into(),
            published: None,
            cvss_score: None,
            vuln_software: uris.iter().map(|u| VulnerableCpe::parse(CpeUri::new(*u).unwrap()).unwrap()).collect(),
        }
    }

    fn wfn(uri: &str) -> Wfn {
        unbind_uri(&CpeUri::new(uri).unwrap()).unwrap()
    }

    fn snap(cves: Vec<CveEntry>) -> CatalogSnapshot {
        build_snapshot(Vec::new(), cves, Utc::now()).unwrap()
    }

    fn ids(c: &[CveCandidate]) -> Vec<&str> {
        c.iter().map(|c| c.cve.id.as_str()).collect()
    }

    #[test]
    fn cpe_list_match_and_order() {
        let s = snap(vec![
            cve("CVE-2016-0001", "", &["cpe:/a:mozilla:seamonkey:2.46"]),
            cve("CVE-2016-0002", "", &["cpe:/a:mozilla:seamonkey:2.35", "cpe:/a:mozilla:firefox:45.0"]),
            cve("CVE-2016-0003", "", &["cpe:/a:mozilla:seamonkey:3.0"]),
            cve("CVE-2016-0004", "", &["cpe:/a:mozilla:seamonkey"]),
        ]);
        let c = search_cves_by_cpe(&wfn("cpe:/a:mozilla:seamonkey:2.35"), &s, &MatchConfig::default());
        assert_eq!(ids(&c), ["CVE-2016-0002", "CVE-2016-0001", "CVE-2016-0004"]);
        assert!(c[0].exact_version && !c[1].exact_version && !c[2].exact_version);
        assert_eq!(c[0].matched_cpes, [CpeUri::new("cpe:/a:mozilla:seamonkey:2.35").unwrap()]);
    }

    #[test]
    fn unknown_vendor_yields_nothing() {
        let s = snap(vec![cve("CVE-2016-0001", "", &["cpe:/a:wireshark:wireshark:2.0.0"])]);
        assert!(search_cves_by_cpe(&wfn("cpe:/a:zzzzvendor:wireshark:2.0.0"), &s, &MatchConfig::default()).is_empty());
        assert!(search_cves_by_cpe(&Wfn::new(), &s, &MatchConfig::default()).is_empty());
    }

    #[test]
    fn summary_words_strip_punctuation() {
        assert_eq!(summary_words("IBM (Rational) DOORS, next; \"generation\"!"), ["ibm", "rational", "doors", "next", "generation"]);
    }

    #[test]
    fn summary_search_on_cpe_less_cves_only() {
        let text = "IBM Rational DOORS Next Generation 4.0 through 6.0.2 is vulnerable to cross-site scripting.";
        let s = snap(vec![
            cve("CVE-2016-9748", text, &[]),
            cve("CVE-2016-9749", text, &["cpe:/a:ibm:other_product:1.0"]),
            cve("CVE-2016-9750", "Unrelated issue in Apache httpd.", &[]),
        ]);
        let assigned = wfn("cpe:/a:ibm:rational_doors_next_generation:6.0.2");
        let c = search_cves_by_summary(&assigned, &s, &MatchConfig::default());
        assert_eq!(ids(&c), ["CVE-2016-9748"]);
        assert!(c[0].matched_cpes.is_empty() && c[0].origin == CveOrigin::Summary);
        assert!(search_cves_by_cpe(&assigned, &s, &MatchConfig::default()).is_empty());
    }

    #[test]
    fn strict_summary_needs_one_word_for_both() {
        let s = snap(vec![cve("CVE-2016-0001", "Wireshark crashes.", &[]), cve("CVE-2016-0002", "Adobe Reader crashes.", &[])]);
        let strict = MatchConfig { strict_summary: true, ..MatchConfig::default() };
        assert_eq!(ids(&search_cves_by_summary(&wfn("cpe:/a:wireshark:wireshark"), &s, &strict)), ["CVE-2016-0001"]);
        assert!(search_cves_by_summary(&wfn("cpe:/a:adobe:reader"), &s, &strict).is_empty());
        assert_eq!(ids(&search_cves_by_summary(&wfn("cpe:/a:adobe:reader"), &s, &MatchConfig::default())), ["CVE-2016-0002"]);
    }

    fn cand(id: &str, origin: CveOrigin, cpes: &[&str], exact: bool) -> CveCandidate {
        CveCandidate {
            cve: cve(id, "", &[]),
            origin,
            matched_cpes: cpes.iter().map(|u| CpeUri::new(*u).unwrap()).collect(),
            exact_version: exact,
        }
    }

    #[test]
    fn merge_prefers_cpe_list() {
        let a = vec![cand("CVE-1-2", CveOrigin::CpeList, &["cpe:/a:x:y"], false), cand("CVE-1-3", CveOrigin::CpeList, &["cpe:/a:x:y"], true)];
        let b = vec![cand("CVE-1-2", CveOrigin::Summary, &[], false), cand("CVE-1-1", CveOrigin::Summary, &[], false)];
        let m = merge_candidates(a, b);
        assert_eq!(ids(&m), ["CVE-1-3", "CVE-1-2", "CVE-1-1"]);
        assert_eq!(m[1].origin, CveOrigin::CpeList);
        assert!(merge_candidates(Vec::new(), Vec::new()).is_empty());
    }

    #[test]
    fn grouping() {
        let c = vec![
            cand("CVE-1-1", CveOrigin::CpeList, &["cpe:/a:mozilla:seamonkey:2.0", "cpe:/a:mozilla:seamonkey:2.1"], false),
            cand("CVE-1-2", CveOrigin::CpeList, &["cpe:/a:mozilla:seamonkey:2.1", "cpe:/a:mozilla:seamonkey:2.0"], false),
            cand("CVE-1-3", CveOrigin::CpeList, &["cpe:/a:mozilla:seamonkey:2.35"], true),
            cand("CVE-1-4", CveOrigin::Summary, &[], false),
            cand("CVE-1-5", CveOrigin::Summary, &[], false),
        ];
        let g = group_by_cpe(&c);
        assert_eq!(g.len(), 3);
        assert_eq!(g[0].cve_ids, ["CVE-1-1", "CVE-1-2"]);
        assert_eq!(g[2].id, SUMMARY_GROUP_ID);
        assert_eq!(g[2].cve_ids, ["CVE-1-4", "CVE-1-5"]);
        assert_ne!(g[0].id, g[1].id);
        assert_eq!(group_by_cpe(&c)[0].id, g[0].id);
    }
}
