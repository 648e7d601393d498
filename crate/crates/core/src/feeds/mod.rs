//! Ingestion of the CPE dictionary and NVD CVE feeds into a [`CatalogSnapshot`].

mod cve;
mod dictionary;
mod fetch;
mod persist;
mod snapshot;

use std::io::{self, BufRead, BufReader, Read};

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::naming::{CpeUri, FormattedString, NamingError, Wfn};

pub use cve::parse_cve_feed;
pub use dictionary::parse_cpe_dictionary;
pub use fetch::{FeedFetcher, FeedSource, FetchError, FetchStamp, Fetched};
pub use persist::{load_snapshot, save_snapshot, PersistError, SNAPSHOT_FORMAT, SNAPSHOT_VERSION};
pub use snapshot::{build_snapshot, CatalogSnapshot};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error while reading feed: {0}")]
    Stream(#[from] io::Error),
    #[error("feed document is not well-formed: {0}")]
    Document(String),
    #[error("duplicate CVE id {0} in one snapshot")]
    DuplicateCveId(String),
}

/// An input element that could not be used and was skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Identifier of the offending element (URI, CVE id, or position).
    pub subject: String,
    pub reason: String,
}

/// Why a dictionary entry was deprecated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeprecationReason {
    NameCorrection,
    NameRemoval,
    AdditionalInformation,
    Unspecified,
}

impl DeprecationReason {
    pub(crate) fn from_attr(text: &str) -> Self {
        match text.trim().to_ascii_uppercase().as_str() {
            "NAME_CORRECTION" => Self::NameCorrection,
            "NAME_REMOVAL" => Self::NameRemoval,
            "ADDITIONAL_INFORMATION" => Self::AdditionalInformation,
            _ => Self::Unspecified,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::NameCorrection => "NAME_CORRECTION",
            Self::NameRemoval => "NAME_REMOVAL",
            Self::AdditionalInformation => "ADDITIONAL_INFORMATION",
            Self::Unspecified => "UNSPECIFIED",
        }
    }
}

/// One `cpe-item` of the CPE dictionary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DictEntryRecord")]
pub struct CpeDictEntry {
    pub uri: CpeUri,
    pub formatted: Option<FormattedString>,
    pub title: String,
    #[serde(skip)]
    pub wfn: Wfn,
    pub deprecated: bool,
    pub deprecated_by: Option<CpeUri>,
    pub deprecation_reason: Option<DeprecationReason>,
}

#[derive(Deserialize)]
struct DictEntryRecord {
    uri: CpeUri,
    formatted: Option<FormattedString>,
    title: String,
    deprecated: bool,
    deprecated_by: Option<CpeUri>,
    deprecation_reason: Option<DeprecationReason>,
}

impl TryFrom<DictEntryRecord> for CpeDictEntry {
    type Error = NamingError;

    fn try_from(r: DictEntryRecord) -> Result<Self, Self::Error> {
        Ok(CpeDictEntry {
            wfn: r.uri.to_wfn()?,
            uri: r.uri,
            formatted: r.formatted,
            title: r.title,
            deprecated: r.deprecated || r.deprecated_by.is_some(),
            deprecated_by: r.deprecated_by,
            deprecation_reason: r.deprecation_reason,
        })
    }
}

/// A CPE listed in a CVE's vulnerable-software list, with its unbound WFN.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VulnerableCpe {
    pub uri: CpeUri,
    pub wfn: Wfn,
}

impl VulnerableCpe {
    pub fn parse(uri: CpeUri) -> Result<Self, NamingError> {
        Ok(VulnerableCpe { wfn: uri.to_wfn()?, uri })
    }
}

impl Serialize for VulnerableCpe {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.uri.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for VulnerableCpe {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let uri = CpeUri::deserialize(deserializer)?;
        VulnerableCpe::parse(uri).map_err(serde::de::Error::custom)
    }
}

/// One CVE feed entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CveEntry {
    pub id: String,
    pub summary: String,
    pub published: Option<DateTime<FixedOffset>>,
    pub cvss_score: Option<f64>,
    pub vuln_software: Vec<VulnerableCpe>,
}

/// `CVE-YYYY-NNNN...` with at least four sequence digits.
pub fn is_valid_cve_id(id: &str) -> bool {
    let Some(rest) = id.strip_prefix("CVE-") else {
        return false;
    };
    let Some((year, seq)) = rest.split_once('-') else {
        return false;
    };
    year.len() == 4
        && year.bytes().all(|b| b.is_ascii_digit())
        && seq.len() >= 4
        && seq.bytes().all(|b| b.is_ascii_digit())
}

/// Result of parsing one dictionary document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DictionaryParse {
    pub entries: Vec<CpeDictEntry>,
    /// `cpe-item` elements that were dropped.
    pub skipped: Vec<Diagnostic>,
    /// Problems inside retained items (e.g. an unusable deprecated-by link).
    pub warnings: Vec<Diagnostic>,
    pub items_seen: usize,
}

/// Result of parsing one CVE feed document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CveFeedParse {
    pub entries: Vec<CveEntry>,
    pub skipped: Vec<Diagnostic>,
    /// Vulnerable-software URIs that failed to parse and were left out of their entry.
    pub warnings: Vec<Diagnostic>,
    pub entries_seen: usize,
}

/// Wraps a byte stream, transparently inflating gzip input.
pub(crate) fn open_stream<'a, R: Read + 'a>(source: R) -> io::Result<Box<dyn BufRead + 'a>> {
    let mut reader = BufReader::new(source);
    let head = reader.fill_buf()?;
    if head.starts_with(&[0x1f, 0x8b]) {
        Ok(Box::new(BufReader::new(flate2::bufread::GzDecoder::new(reader))))
    } else {
        Ok(Box::new(reader))
    }
}

pub(crate) fn xml_error(e: impl std::fmt::Display, pos: u64) -> IngestError {
    IngestError::Document(format!("{e} (at byte {pos})"))
}

/// Maps a quick-xml error to a stream or document error.
pub(crate) fn map_xml_error(e: quick_xml::Error, pos: u64) -> IngestError {
    match e {
        quick_xml::Error::Io(io) => IngestError::Stream(io::Error::new(io.kind(), io.to_string())),
        other => xml_error(other, pos),
    }
}


/// Counts and diagnostics of one [`ingest`] run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub dictionary_items_seen: usize,
    pub dictionary_entries: usize,
    pub cve_entries_seen: usize,
    pub cve_entries: usize,
    pub skipped: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
}

/// Parses a dictionary and any number of CVE feeds and builds a snapshot.
pub fn ingest<D: Read, C: Read>(
    dictionary: D,
    cve_feeds: impl IntoIterator<Item = C>,
    snapshot_time: chrono::DateTime<chrono::Utc>,
) -> Result<(CatalogSnapshot, IngestReport), IngestError> {
    let dict = parse_cpe_dictionary(dictionary)?;
    let mut report = IngestReport {
        dictionary_items_seen: dict.items_seen,
        dictionary_entries: dict.entries.len(),
        skipped: dict.skipped,
        warnings: dict.warnings,
        ..IngestReport::default()
    };
    let mut cves = Vec::new();
    for feed in cve_feeds {
        let parsed = parse_cve_feed(feed)?;
        report.cve_entries_seen += parsed.entries_seen;
        report.skipped.extend(parsed.skipped);
        report.warnings.extend(parsed.warnings);
        cves.extend(parsed.entries);
    }
    report.cve_entries = cves.len();
    let snapshot = build_snapshot(dict.entries, cves, snapshot_time)?;
    Ok((snapshot, report))
}
