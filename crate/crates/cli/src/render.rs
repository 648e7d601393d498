//! Output encoding: pretty JSON or plain text.

use std::collections::BTreeMap;
use std::fmt::Write;

use iva_core::matching::{CveCandidate, CveGroup};
use iva_core::naming::{AttributeValue, Wfn, ATTRIBUTE_NAMES};
use iva_triage::service::{AlertGroup, CandidateView};
use iva_triage::store::Alert;
use serde::Serialize;

use crate::OutputFormat;

pub fn emit<T: Serialize + ?Sized>(format: OutputFormat, value: &T, text: impl FnOnce(&T) -> String) {
    match format {
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(value).expect("serializable output")),
        OutputFormat::Text => {
            let s = text(value);
            print!("{s}");
            if !s.is_empty() && !s.ends_with('\n') {
                println!();
            }
        }
    }
}

/// Attribute name → value, with logical values spelled `ANY` / `NA`.
pub fn wfn_attributes(wfn: &Wfn) -> BTreeMap<&'static str, String> {
    ATTRIBUTE_NAMES
        .iter()
        .zip(wfn.attributes())
        .map(|(name, v)| {
            let v = match v {
                AttributeValue::Any => "ANY".to_string(),
                AttributeValue::Na => "NA".to_string(),
                AttributeValue::Value(s) => s.clone(),
            };
            (*name, v)
        })
        .collect()
}

pub fn candidates(list: &[CandidateView]) -> String {
    let mut s = String::new();
    for c in list {
        let exact = if c.exact_version { "  exact-version" } else { "" };
        let _ = writeln!(
            s,
            "{:>3}  {}  (vendor d={}, product d={}){exact}  {}",
            c.rank, c.uri, c.vendor_distance, c.product_distance, c.title
        );
    }
    s
}

pub fn cve_candidates(list: &[CveCandidate]) -> String {
    let mut s = String::new();
    for c in list {
        let exact = if c.exact_version { " exact-version" } else { "" };
        let cpes: Vec<&str> = c.matched_cpes.iter().map(|u| u.as_str()).collect();
        let _ = writeln!(s, "{}  {}{exact}  {}", c.cve.id, c.origin.as_str(), cpes.join(" "));
    }
    if list.is_empty() {
        s.push_str("no matching CVEs\n");
    }
    s
}

pub fn cve_groups(groups: &[CveGroup]) -> String {
    let mut s = String::new();
    for g in groups {
        let cpes: Vec<&str> = g.cpes.iter().map(|u| u.as_str()).collect();
        let exact = if g.exact_version { " exact-version" } else { "" };
        let _ = writeln!(s, "{} ({}{exact}) {}", g.id, g.origin.as_str(), cpes.join(" "));
        for id in &g.cve_ids {
            let _ = writeln!(s, "    {id}");
        }
    }
    s
}

fn alert_line(s: &mut String, a: &Alert, indent: &str) {
    let exact = if a.exact_version { " exact-version" } else { "" };
    let score = a.cvss_score.map(|c| format!(" cvss={c:.1}")).unwrap_or_default();
    let _ = writeln!(s, "{indent}#{:<5} {}  {}  {}{exact}{score}", a.id, a.cve_id, a.state.as_str(), a.origin.as_str());
}

pub fn alerts(list: &[Alert]) -> String {
    let mut s = String::new();
    for a in list {
        alert_line(&mut s, a, "");
    }
    if list.is_empty() {
        s.push_str("no alerts\n");
    }
    s
}

pub fn alert_groups(groups: &[AlertGroup]) -> String {
    let mut s = String::new();
    for g in groups {
        let cpes: Vec<&str> = g.cpes.iter().map(|u| u.as_str()).collect();
        let exact = if g.exact_version { " exact-version" } else { "" };
        let _ = writeln!(s, "{} ({}{exact}) {}", g.group_id, g.origin.as_str(), cpes.join(" "));
        for a in &g.alerts {
            alert_line(&mut s, a, "    ");
        }
    }
    if groups.is_empty() {
        s.push_str("no alerts\n");
    }
    s
}
