//! Search-term generation from raw inventory strings.

use super::{InventoryProduct, MatchError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SearchTerms {
    pub vendor_terms: Vec<String>,
    pub product_terms: Vec<String>,
}

fn tokens(raw: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in raw.split_whitespace().map(str::to_lowercase) {
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// Joins of the leading `n, n-1, ..., min_len` tokens, longest first.
fn prefix_joins(tokens: &[String], min_len: usize) -> impl Iterator<Item = String> + '_ {
    (min_len.max(1)..=tokens.len()).rev().map(|n| tokens[..n].join("_"))
}

/// Single tokens, plain words before tokens with digits or punctuation.
fn ordered_singles(tokens: &[String]) -> Vec<String> {
    let (words, rest): (Vec<_>, Vec<_>) = tokens
        .iter()
        .cloned()
        .partition(|t| t.chars().all(char::is_alphabetic));
    words.into_iter().chain(rest).collect()
}

fn push_unique(out: &mut Vec<String>, items: impl IntoIterator<Item = String>) {
    for t in items {
        if !out.contains(&t) {
            out.push(t);
        }
    }
}

/// Builds vendor and product search terms.
///
/// For each field the raw text is split on whitespace and lowercased. Terms
/// are the underscore-joined leading runs (longest first), then the single
/// tokens. When product tokens contain vendor tokens, the leading-run joins
/// of the product without those tokens are added after the full joins, so
/// both `adobe_air` and `air` are searched.
pub fn generate_search_terms(product: &InventoryProduct) -> Result<SearchTerms, MatchError> {
    let product_tokens = tokens(&product.product_raw);
    if product_tokens.is_empty() {
        return Err(MatchError::EmptyProduct);
    }
    let vendor_tokens = tokens(&product.vendor_raw);

    let mut vendor_terms = Vec::new();
    push_unique(&mut vendor_terms, prefix_joins(&vendor_tokens, 1));
    push_unique(&mut vendor_terms, ordered_singles(&vendor_tokens));

    let mut product_terms = Vec::new();
    push_unique(&mut product_terms, prefix_joins(&product_tokens, 1));
    if product_tokens.iter().any(|t| vendor_tokens.contains(t)) {
        let without_vendor: Vec<String> = product_tokens
            .iter()
            .filter(|t| !vendor_tokens.contains(t))
            .cloned()
            .collect();
        push_unique(&mut product_terms, prefix_joins(&without_vendor, 2));
    }
    push_unique(&mut product_terms, ordered_singles(&product_tokens));

    Ok(SearchTerms { vendor_terms, product_terms })
}
