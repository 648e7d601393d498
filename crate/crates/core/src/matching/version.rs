//! Version keys and the version comparison used for ranking and CVE matching.

use serde::{Deserialize, Serialize};

use crate::naming::AttributeValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VersionScheme {
    Year,
    Dotted,
    Opaque,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Segment {
    Num(u64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionKey {
    pub scheme: VersionScheme,
    pub components: Vec<Segment>,
    /// Trimmed, lowercased source text.
    pub raw: String,
}

fn segment(s: &str) -> Segment {
    if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) {
        if let Ok(n) = s.parse() {
            return Segment::Num(n);
        }
    }
    Segment::Text(s.to_string())
}

pub fn parse_version(text: &str) -> VersionKey {
    let raw = text.trim().to_lowercase();
    if raw.len() == 4 && raw.bytes().all(|b| b.is_ascii_digit()) {
        let year: u64 = raw.parse().unwrap();
        if (1900..=2099).contains(&year) {
            return VersionKey { scheme: VersionScheme::Year, components: vec![Segment::Num(year)], raw };
        }
    }
    if raw.contains('.') {
        let components: Vec<Segment> = raw.split('.').map(segment).collect();
        if components.iter().any(|c| matches!(c, Segment::Num(_))) {
            return VersionKey { scheme: VersionScheme::Dotted, components, raw };
        }
    }
    VersionKey { scheme: VersionScheme::Opaque, components: vec![Segment::Text(raw.clone())], raw }
}

impl VersionKey {
    /// The leading ("main") version number, if there is one.
    pub fn main_component(&self) -> Option<Segment> {
        match self.scheme {
            VersionScheme::Year | VersionScheme::Dotted => match &self.components[0] {
                Segment::Text(t) if t.is_empty() => None,
                c => Some(c.clone()),
            },
            VersionScheme::Opaque => {
                let digits: String = self.raw.chars().take_while(char::is_ascii_digit).collect();
                digits.parse().ok().map(Segment::Num)
            }
        }
    }

    /// Number of equal leading components.
    pub fn common_prefix(&self, other: &VersionKey) -> usize {
        if self.raw.is_empty() || other.raw.is_empty() {
            return 0;
        }
        self.components
            .iter()
            .zip(&other.components)
            .take_while(|(a, b)| a == b)
            .count()
    }
}

/// How a CVE-listed version matched a product version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VersionMatch {
    /// The listed version is ANY.
    Any,
    Verbatim,
    /// `*` / `?` wildcard pattern on either side.
    Wildcard,
    /// Only the main version numbers agree.
    MainVersion,
}

impl VersionMatch {
    pub fn is_exact(self) -> bool {
        matches!(self, VersionMatch::Verbatim | VersionMatch::Wildcard)
    }
}

/// Glob match where `*` spans any run of characters and `?` exactly one.
pub fn wildcard_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

fn has_wildcard(s: &str) -> bool {
    s.contains('*') || s.contains('?')
}

/// Classifies how `cve_version` matches the software version, or `None`.
pub fn version_match(sw: &VersionKey, cve_version: &AttributeValue) -> Option<VersionMatch> {
    let listed = match cve_version {
        AttributeValue::Any => return Some(VersionMatch::Any),
        AttributeValue::Na => return None,
        AttributeValue::Value(v) => v,
    };
    if sw.raw.is_empty() {
        return None;
    }
    if *listed == sw.raw {
        return Some(VersionMatch::Verbatim);
    }
    if (has_wildcard(listed) && wildcard_match(listed, &sw.raw))
        || (has_wildcard(&sw.raw) && wildcard_match(&sw.raw, listed))
    {
        return Some(VersionMatch::Wildcard);
    }
    let main = sw.main_component()?;
    (parse_version(listed).main_component() == Some(main)).then_some(VersionMatch::MainVersion)
}

pub fn same_version(sw: &VersionKey, cve_version: &AttributeValue) -> bool {
    version_match(sw, cve_version).is_some()
}
