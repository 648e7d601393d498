use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use tracing::warn;

use super::{CpeDictEntry, CveEntry, IngestError};
use crate::naming::{bind_to_uri, AttributeValue, CpeUri};

/// Immutable, indexed view of one CPE dictionary plus one set of CVE feeds.
///
/// Dictionary entries are ordered by URI and CVEs by id. Entry indices used by
/// the lookup methods refer to [`CatalogSnapshot::dictionary`].
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogSnapshot {
    dictionary: Vec<CpeDictEntry>,
    cves: Vec<CveEntry>,
    deprecation_map: BTreeMap<CpeUri, CpeUri>,
    by_uri: HashMap<CpeUri, usize>,
    vendor_values: BTreeMap<String, Vec<usize>>,
    product_values: BTreeMap<String, Vec<usize>>,
    vendor_tokens: BTreeMap<String, Vec<usize>>,
    product_tokens: BTreeMap<String, Vec<usize>>,
    snapshot_time: DateTime<Utc>,
}

fn add_tokens(index: &mut BTreeMap<String, Vec<usize>>, value: &AttributeValue, idx: usize) {
    let Some(text) = value.as_str() else { return };
    let tokens: BTreeSet<&str> = std::iter::once(text)
        .chain(text.split('_').filter(|t| !t.is_empty()))
        .collect();
    for t in tokens {
        index.entry(t.to_string()).or_default().push(idx);
    }
}

/// Builds a snapshot. Duplicate dictionary URIs keep their first occurrence;
/// a repeated CVE id is an error.
pub fn build_snapshot(
    dict_entries: Vec<CpeDictEntry>,
    cve_entries: Vec<CveEntry>,
    snapshot_time: DateTime<Utc>,
) -> Result<CatalogSnapshot, IngestError> {
    let mut seen_cves = BTreeSet::new();
    for c in &cve_entries {
        if !seen_cves.insert(c.id.as_str()) {
            return Err(IngestError::DuplicateCveId(c.id.clone()));
        }
    }
    let mut cves = cve_entries;
    cves.sort_by(|a, b| a.id.cmp(&b.id));

    // Canonical URI per entry; keep the first entry for each.
    let mut keyed: Vec<(CpeUri, usize, CpeDictEntry)> = dict_entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| (bind_to_uri(&e.wfn), i, e))
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let before = keyed.len();
    keyed.dedup_by(|later, earlier| later.0 == earlier.0);
    if keyed.len() != before {
        warn!(dropped = before - keyed.len(), "duplicate dictionary URIs ignored");
    }

    let mut by_uri = HashMap::with_capacity(keyed.len());
    let mut dictionary = Vec::with_capacity(keyed.len());
    for (canon, _, entry) in keyed {
        by_uri.insert(canon, dictionary.len());
        dictionary.push(entry);
    }

    let mut vendor_values: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut product_values: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut vendor_tokens = BTreeMap::new();
    let mut product_tokens = BTreeMap::new();
    for (i, e) in dictionary.iter().enumerate() {
        if let Some(v) = e.wfn.vendor.as_str() {
            vendor_values.entry(v.to_string()).or_default().push(i);
        }
        if let Some(p) = e.wfn.product.as_str() {
            product_values.entry(p.to_string()).or_default().push(i);
        }
        add_tokens(&mut vendor_tokens, &e.wfn.vendor, i);
        add_tokens(&mut product_tokens, &e.wfn.product, i);
    }

    let mut deprecation_map = BTreeMap::new();
    for e in dictionary.iter().filter(|e| e.deprecated) {
        let Some(target) = &e.deprecated_by else { continue };
        let from = bind_to_uri(&e.wfn);
        let target = match target.to_wfn() {
            Ok(w) => bind_to_uri(&w),
            Err(_) => continue,
        };
        if from != target && by_uri.contains_key(&target) {
            deprecation_map.insert(from, target);
        }
    }
    break_cycles(&mut deprecation_map);

    Ok(CatalogSnapshot {
        dictionary,
        cves,
        deprecation_map,
        by_uri,
        vendor_values,
        product_values,
        vendor_tokens,
        product_tokens,
        snapshot_time,
    })
}

/// Drops the edge that closes each cycle so every chain terminates.
fn break_cycles(map: &mut BTreeMap<CpeUri, CpeUri>) {
    let starts: Vec<CpeUri> = map.keys().cloned().collect();
    for start in starts {
        let mut visited = BTreeSet::new();
        let mut cur = start;
        while let Some(next) = map.get(&cur).cloned() {
            visited.insert(cur.clone());
            if visited.contains(&next) {
                warn!(from = %cur, to = %next, "deprecation cycle broken");
                map.remove(&cur);
                break;
            }
            cur = next;
        }
    }
}

impl CatalogSnapshot {
    pub fn empty(snapshot_time: DateTime<Utc>) -> Self {
        build_snapshot(Vec::new(), Vec::new(), snapshot_time).expect("empty inputs are valid")
    }

    pub fn dictionary(&self) -> &[CpeDictEntry] {
        &self.dictionary
    }

    pub fn cves(&self) -> &[CveEntry] {
        &self.cves
    }

    pub fn cve(&self, id: &str) -> Option<&CveEntry> {
        self.cves.binary_search_by(|c| c.id.as_str().cmp(id)).ok().map(|i| &self.cves[i])
    }

    pub fn deprecation_map(&self) -> &BTreeMap<CpeUri, CpeUri> {
        &self.deprecation_map
    }

    pub fn snapshot_time(&self) -> DateTime<Utc> {
        self.snapshot_time
    }

    /// Dictionary entry with the given URI, compared in canonical form.
    pub fn entry_index(&self, uri: &CpeUri) -> Option<usize> {
        let canon = crate::naming::canonical_uri(uri).ok()?;
        self.by_uri.get(&canon).copied()
    }

    pub fn entry(&self, uri: &CpeUri) -> Option<&CpeDictEntry> {
        self.entry_index(uri).map(|i| &self.dictionary[i])
    }

    /// Follows deprecation links from `idx` to the entry at the end of the chain.
    pub fn resolve_deprecated(&self, idx: usize) -> usize {
        let mut cur = idx;
        // chains are acyclic; the bound guards against malformed input anyway
        for _ in 0..=self.deprecation_map.len() {
            let canon = bind_to_uri(&self.dictionary[cur].wfn);
            match self.deprecation_map.get(&canon).and_then(|t| self.by_uri.get(t)) {
                Some(&next) => cur = next,
                None => break,
            }
        }
        cur
    }

    /// Distinct WFN vendor values with the entries carrying each.
    pub fn vendor_values(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.vendor_values.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn product_values(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.product_values.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Entries whose vendor equals `token` or contains it as an underscore-separated token.
    pub fn entries_by_vendor_token(&self, token: &str) -> &[usize] {
        self.vendor_tokens.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn entries_by_product_token(&self, token: &str) -> &[usize] {
        self.product_tokens.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Entries having a vendor token that starts with `prefix`, deduplicated and sorted.
    pub fn entries_by_vendor_prefix(&self, prefix: &str) -> Vec<usize> {
        prefix_lookup(&self.vendor_tokens, prefix)
    }

    pub fn entries_by_product_prefix(&self, prefix: &str) -> Vec<usize> {
        prefix_lookup(&self.product_tokens, prefix)
    }

    pub fn vendor_token_count(&self) -> usize {
        self.vendor_tokens.len()
    }
}

fn prefix_lookup(index: &BTreeMap<String, Vec<usize>>, prefix: &str) -> Vec<usize> {
    let set: BTreeSet<usize> = index
        .range(prefix.to_string()..)
        .take_while(|(k, _)| k.starts_with(prefix))
        .flat_map(|(_, v)| v.iter().copied())
        .collect();
    set.into_iter().collect()
}
