//! CPE names: the Well-Formed Name (WFN) attribute form and its two bindings.
//!
//! All matching in this crate is done on [`Wfn`] values. The URI binding
//! (`cpe:/...`, CPE 2.2) and the formatted-string binding (`cpe:2.3:...`) are
//! converted into a WFN on the way in and re-bound only for display and
//! export.
//!
//! Attribute text is stored decoded and lowercased. The wildcard characters
//! `*` and `?` are kept verbatim; their meaning is applied by the matching
//! code, not here.

mod fs;
mod uri;
mod wfn_text;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fs::{bind_to_formatted_string, unbind_formatted_string};
pub use uri::{bind_to_uri, unbind_uri};
pub use wfn_text::{format_wfn, parse_wfn};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NamingError {
    #[error("malformed CPE URI {input:?}: {reason}")]
    MalformedUri { input: String, reason: String },
    #[error("malformed CPE formatted string {input:?}: {reason}")]
    MalformedFormattedString { input: String, reason: String },
    #[error("malformed WFN {input:?}: {reason}")]
    MalformedWfn { input: String, reason: String },
    #[error("invalid attribute value {value:?}: {reason}")]
    InvalidValue { value: String, reason: String },
}

/// Value of a single WFN attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum AttributeValue {
    /// No restriction on the attribute.
    #[default]
    Any,
    /// Not applicable.
    Na,
    /// Lowercase, non-empty text without whitespace. May contain `*` and `?`.
    Value(String),
}

impl AttributeValue {
    /// Builds a string value, enforcing the attribute text invariants.
    ///
    /// Input is lowercased and interior spaces become underscores; any other
    /// whitespace is rejected.
    pub fn string(text: impl AsRef<str>) -> Result<Self, NamingError> {
        let text = text.as_ref();
        if text.is_empty() {
            return Err(NamingError::InvalidValue {
                value: text.to_string(),
                reason: "empty string value".into(),
            });
        }
        let mut out = String::with_capacity(text.len());
        for c in text.chars() {
            if c == ' ' {
                out.push('_');
            } else if c.is_whitespace() || c.is_control() {
                return Err(NamingError::InvalidValue {
                    value: text.to_string(),
                    reason: format!("contains whitespace or control character {c:?}"),
                });
            } else {
                out.extend(c.to_lowercase());
            }
        }
        Ok(AttributeValue::Value(out))
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttributeValue::Value(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_any(&self) -> bool {
        matches!(self, AttributeValue::Any)
    }

    pub fn is_na(&self) -> bool {
        matches!(self, AttributeValue::Na)
    }

    pub(crate) fn is_valid(&self) -> bool {
        match self {
            AttributeValue::Value(s) => {
                !s.is_empty()
                    && !s.chars().any(|c| c.is_whitespace() || c.is_control() || c.is_uppercase())
            }
            _ => true,
        }
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributeValue::Any => f.write_str("ANY"),
            AttributeValue::Na => f.write_str("NA"),
            AttributeValue::Value(s) => f.write_str(s),
        }
    }
}

/// Names of the eleven WFN attributes, in canonical order.
pub const ATTRIBUTE_NAMES: [&str; 11] = [
    "part",
    "vendor",
    "product",
    "version",
    "update",
    "edition",
    "language",
    "sw_edition",
    "target_sw",
    "target_hw",
    "other",
];

/// Well-Formed CPE Name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Wfn {
    pub part: AttributeValue,
    pub vendor: AttributeValue,
    pub product: AttributeValue,
    pub version: AttributeValue,
    pub update: AttributeValue,
    pub edition: AttributeValue,
    pub language: AttributeValue,
    pub sw_edition: AttributeValue,
    pub target_sw: AttributeValue,
    pub target_hw: AttributeValue,
    pub other: AttributeValue,
}

impl Wfn {
    /// A WFN with every attribute ANY.
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attributes(&self) -> [&AttributeValue; 11] {
        [
            &self.part,
            &self.vendor,
            &self.product,
            &self.version,
            &self.update,
            &self.edition,
            &self.language,
            &self.sw_edition,
            &self.target_sw,
            &self.target_hw,
            &self.other,
        ]
    }

    pub fn attributes_mut(&mut self) -> [&mut AttributeValue; 11] {
        [
            &mut self.part,
            &mut self.vendor,
            &mut self.product,
            &mut self.version,
            &mut self.update,
            &mut self.edition,
            &mut self.language,
            &mut self.sw_edition,
            &mut self.target_sw,
            &mut self.target_hw,
            &mut self.other,
        ]
    }

    pub fn attribute_mut(&mut self, name: &str) -> Option<&mut AttributeValue> {
        let idx = ATTRIBUTE_NAMES.iter().position(|n| *n == name)?;
        self.attributes_mut().into_iter().nth(idx)
    }

    /// Checks the WFN invariants: valid attribute text and a part of `a`, `o` or `h`.
    pub fn validate(&self) -> Result<(), NamingError> {
        if let AttributeValue::Value(p) = &self.part {
            if !is_part_token(p) {
                return Err(NamingError::InvalidValue {
                    value: p.clone(),
                    reason: "part must be one of a, o, h".into(),
                });
            }
        }
        for (name, value) in ATTRIBUTE_NAMES.iter().zip(self.attributes()) {
            if !value.is_valid() {
                return Err(NamingError::InvalidValue {
                    value: value.to_string(),
                    reason: format!("invalid text for attribute {name}"),
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Wfn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_wfn(self))
    }
}

pub(crate) fn is_part_token(s: &str) -> bool {
    matches!(s, "a" | "o" | "h")
}

/// A CPE 2.2 URI binding, e.g. `cpe:/a:microsoft:internet_explorer:8:-`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CpeUri(String);

impl CpeUri {
    /// Wraps `raw` after checking the `cpe:/` prefix. The rest is checked by [`unbind_uri`].
    pub fn new(raw: impl Into<String>) -> Result<Self, NamingError> {
        let raw = raw.into();
        if !raw.get(..5).is_some_and(|p| p.eq_ignore_ascii_case("cpe:/")) {
            return Err(NamingError::MalformedUri {
                input: raw,
                reason: "missing cpe:/ prefix".into(),
            });
        }
        Ok(CpeUri(raw))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    pub fn to_wfn(&self) -> Result<Wfn, NamingError> {
        unbind_uri(self)
    }
}

impl fmt::Display for CpeUri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for CpeUri {
    type Err = NamingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CpeUri::new(s)
    }
}

/// A CPE 2.3 formatted-string binding, e.g. `cpe:2.3:a:mozilla:firefox:38.0:*:*:*:*:*:*:*`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FormattedString(String);

impl FormattedString {
    pub fn new(raw: impl Into<String>) -> Result<Self, NamingError> {
        let raw = raw.into();
        if !raw.get(..8).is_some_and(|p| p.eq_ignore_ascii_case("cpe:2.3:")) {
            return Err(NamingError::MalformedFormattedString {
                input: raw,
                reason: "missing cpe:2.3: prefix".into(),
            });
        }
        Ok(FormattedString(raw))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn to_wfn(&self) -> Result<Wfn, NamingError> {
        unbind_formatted_string(self)
    }
}

impl fmt::Display for FormattedString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for FormattedString {
    type Err = NamingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FormattedString::new(s)
    }
}

/// Parses any of the three textual forms, picking the binding by prefix.
pub fn parse_any(text: &str) -> Result<Wfn, NamingError> {
    let t = text.trim();
    let lower = t.get(..8).map(|s| s.to_ascii_lowercase()).unwrap_or_default();
    if lower.starts_with("cpe:2.3:") {
        unbind_formatted_string(&FormattedString::new(t)?)
    } else if lower.starts_with("cpe:/") {
        unbind_uri(&CpeUri::new(t)?)
    } else if lower.starts_with("wfn:[") {
        parse_wfn(t)
    } else {
        Err(NamingError::MalformedUri {
            input: t.to_string(),
            reason: "expected cpe:/, cpe:2.3: or wfn:[ prefix".into(),
        })
    }
}

/// Canonical URI form of a URI: unbind then re-bind.
pub fn canonical_uri(uri: &CpeUri) -> Result<CpeUri, NamingError> {
    Ok(bind_to_uri(&unbind_uri(uri)?))
}

// WFNs serialize as their formatted-string binding, which is lossless.
impl Serialize for Wfn {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(bind_to_formatted_string(self).as_str())
    }
}

impl<'de> Deserialize<'de> for Wfn {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_any(&s).map_err(serde::de::Error::custom)
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn string_value_normalizes_case_and_spaces() {
        assert_eq!(
            AttributeValue::string("Internet Explorer").unwrap(),
            AttributeValue::Value("internet_explorer".into())
        );
        assert!(AttributeValue::string("").is_err());
        assert!(AttributeValue::string("a\tb").is_err());
    }

    #[test]
    fn validate_rejects_bad_part() {
        let mut w = test_support::ie8();
        w.part = AttributeValue::Value("x".into());
        assert!(w.validate().is_err());
        w.part = AttributeValue::Any;
        assert!(w.validate().is_ok());
    }

    #[test]
    fn prefixes_are_checked() {
        assert!(CpeUri::new("cpe:2.3:a").is_err());
        assert!(FormattedString::new("cpe:/a").is_err());
        assert!(parse_any("foo").is_err());
    }

    #[test]
    fn wfn_serde_is_formatted_string() {
        let w = test_support::ie8();
        let json = serde_json::to_string(&w).unwrap();
        assert_eq!(json, "\"cpe:2.3:a:microsoft:internet_explorer:8:-:*:*:*:*:*:*\"");
        let back: Wfn = serde_json::from_str(&json).unwrap();
        assert_eq!(back, w);
    }
}
