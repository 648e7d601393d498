//! Dictionary search: fuzzy vendor/product lookup and version-aware ranking.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::version::{parse_version, VersionKey};
use super::{generate_search_terms, levenshtein_within, InventoryProduct, MatchConfig, MatchError, SearchTerms};
use crate::feeds::{CatalogSnapshot, CpeDictEntry};
use crate::naming::AttributeValue;

/// How close a candidate's version is to the product version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionAffinity {
    pub exact: bool,
    pub common_prefix: usize,
}

impl VersionAffinity {
    fn of(entry: &CpeDictEntry, product_version: &VersionKey) -> Self {
        match &entry.wfn.version {
            AttributeValue::Value(v) => {
                let key = parse_version(v);
                VersionAffinity {
                    exact: !product_version.raw.is_empty() && key.raw == product_version.raw,
                    common_prefix: key.common_prefix(product_version),
                }
            }
            _ => VersionAffinity { exact: false, common_prefix: 0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpeCandidate {
    pub entry: CpeDictEntry,
    /// 1-based position in the ranked list.
    pub rank: usize,
    pub vendor_distance: usize,
    pub product_distance: usize,
    pub version_affinity: VersionAffinity,
}

/// True for terms made of digits and version punctuation only (`4.5.2`, `2008`, `1.0-rc`).
pub fn is_version_like(term: &str) -> bool {
    term.chars().any(|c| c.is_ascii_digit())
        && term.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '_'))
}

/// Smallest distance from any term to `value`, within the threshold.
///
/// Version-like terms only count on an exact hit; otherwise short numeric
/// strings would match every product carrying a similar number.
fn best_distance(terms: &[String], value: &str, max: usize) -> Option<usize> {
    terms
        .iter()
        .filter_map(|t| {
            if is_version_like(t) {
                (t == value).then_some(0)
            } else {
                levenshtein_within(t, value, max)
            }
        })
        .min()
}

/// Distinct values within the threshold of some term, with their distance.
fn close_values<'a>(
    values: impl Iterator<Item = (&'a str, &'a [usize])>,
    terms: &[String],
    max: usize,
) -> BTreeMap<usize, usize> {
    let mut hits = BTreeMap::new();
    for (value, entries) in values {
        if let Some(d) = best_distance(terms, value, max) {
            for &e in entries {
                hits.insert(e, d);
            }
        }
    }
    hits
}

/// Every dictionary entry whose vendor and product are each within the
/// distance threshold of some search term, ranked by [`rank_by_version`].
///
/// An empty vendor term list leaves the vendor unconstrained (distance 0).
/// Hits on deprecated entries are replaced by the end of their deprecation
/// chain.
pub fn match_cpe_candidates(
    terms: &SearchTerms,
    product_version: &VersionKey,
    snapshot: &CatalogSnapshot,
    config: &MatchConfig,
) -> Vec<CpeCandidate> {
    let max = config.max_distance;
    let products = close_values(snapshot.product_values(), &terms.product_terms, max);
    let vendors = if terms.vendor_terms.is_empty() {
        None
    } else {
        Some(close_values(snapshot.vendor_values(), &terms.vendor_terms, max))
    };

    // resolved entry -> (vendor distance, product distance), best pair kept
    let mut hits: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (&idx, &pd) in &products {
        let vd = match &vendors {
            None => 0,
            Some(v) => match v.get(&idx) {
                Some(&d) => d,
                None => continue,
            },
        };
        let target = snapshot.resolve_deprecated(idx);
        let (vd, pd) = if target == idx {
            (vd, pd)
        } else {
            // distances are reported against the name actually returned
            let wfn = &snapshot.dictionary()[target].wfn;
            let vd = match (&vendors, wfn.vendor.as_str()) {
                (None, _) => 0,
                (Some(_), Some(v)) => best_distance(&terms.vendor_terms, v, max).unwrap_or(vd),
                (Some(_), None) => vd,
            };
            let pd = wfn.product.as_str().and_then(|p| best_distance(&terms.product_terms, p, max)).unwrap_or(pd);
            (vd, pd)
        };
        hits.entry(target)
            .and_modify(|cur| {
                if (pd, vd) < (cur.1, cur.0) {
                    *cur = (vd, pd);
                }
            })
            .or_insert((vd, pd));
    }

    let dict = snapshot.dictionary();
    let candidates = hits
        .into_iter()
        .map(|(idx, (vd, pd))| CpeCandidate {
            entry: dict[idx].clone(),
            rank: 0,
            vendor_distance: vd,
            product_distance: pd,
            version_affinity: VersionAffinity::of(&dict[idx], product_version),
        })
        .collect();
    rank_by_version(candidates, product_version)
}

fn rank_order(a: &CpeCandidate, b: &CpeCandidate) -> Ordering {
    b.version_affinity
        .exact
        .cmp(&a.version_affinity.exact)
        .then(b.version_affinity.common_prefix.cmp(&a.version_affinity.common_prefix))
        .then(a.product_distance.cmp(&b.product_distance))
        .then(a.vendor_distance.cmp(&b.vendor_distance))
        .then_with(|| a.entry.uri.as_str().cmp(b.entry.uri.as_str()))
}

/// Orders candidates: exact version, longer common version prefix, smaller
/// product distance, smaller vendor distance, then URI. Assigns ranks from 1.
pub fn rank_by_version(mut candidates: Vec<CpeCandidate>, product_version: &VersionKey) -> Vec<CpeCandidate> {
    for c in &mut candidates {
        c.version_affinity = VersionAffinity::of(&c.entry, product_version);
    }
    candidates.sort_by(rank_order);
    for (i, c) in candidates.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    candidates
}

/// Search terms + dictionary match + ranking for one inventory product.
pub fn find_cpe_candidates(
    product: &InventoryProduct,
    snapshot: &CatalogSnapshot,
    config: &MatchConfig,
) -> Result<Vec<CpeCandidate>, MatchError> {
    let terms = generate_search_terms(product)?;
    Ok(match_cpe_candidates(&terms, &parse_version(&product.version_raw), snapshot, config))
}
