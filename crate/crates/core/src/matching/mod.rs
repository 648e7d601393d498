//! CPE candidate search for inventory products and CVE matching for assigned CPEs.
//!
//! The flow is: [`generate_search_terms`] → [`match_cpe_candidates`] (fuzzy
//! vendor/product search, ranked by [`rank_by_version`]) → a human picks a
//! CPE → [`search_cves_by_cpe`] + [`search_cves_by_summary`] →
//! [`merge_candidates`] → [`group_by_cpe`] for bulk triage.

mod cpe_search;
mod cve_search;
mod distance;
mod terms;
mod version;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cpe_search::{find_cpe_candidates, is_version_like, match_cpe_candidates, rank_by_version, CpeCandidate, VersionAffinity};
pub use cve_search::{
    group_by_cpe, merge_candidates, search_cves, search_cves_by_cpe, search_cves_by_summary, summary_words, CveCandidate,
    CveGroup, CveOrigin, SUMMARY_GROUP_ID,
};
pub use distance::{levenshtein, levenshtein_within};
pub use terms::{generate_search_terms, SearchTerms};
pub use version::{parse_version, same_version, version_match, wildcard_match, Segment, VersionKey, VersionMatch, VersionScheme};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("product name is blank")]
    EmptyProduct,
}

/// Tunables shared by CPE and CVE matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Largest edit distance at which two names are considered similar.
    pub max_distance: usize,
    /// Require a single summary word to be similar to both product and vendor.
    pub strict_summary: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { max_distance: 2, strict_summary: false }
    }
}

/// A software product as reported by an inventory source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryProduct {
    pub external_id: String,
    pub vendor_raw: String,
    pub product_raw: String,
    pub version_raw: String,
}

impl InventoryProduct {
    pub fn new(external_id: &str, vendor: &str, product: &str, version: &str) -> Self {
        InventoryProduct {
            external_id: external_id.into(),
            vendor_raw: vendor.into(),
            product_raw: product.into(),
            version_raw: version.into(),
        }
    }
}

/// `similar()` of the CVE matching step: edit distance within the threshold.
pub fn similar(a: &str, b: &str, config: &MatchConfig) -> bool {
    levenshtein_within(a, b, config.max_distance).is_some()
}
