//! Retrieval of feed bytes from local paths or HTTP(S) URLs.
//!
//! The fetcher remembers a stamp per source. Remote sources are requested
//! conditionally (`If-None-Match` / `If-Modified-Since`); a `304` or an
//! identical body yields [`Fetched::Unchanged`]. Local files are compared by
//! content digest.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::header::{ETAG, IF_MODIFIED_SINCE, IF_NONE_MATCH, LAST_MODIFIED};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum FeedSource {
    Path(PathBuf),
    Url(String),
}

impl FromStr for FeedSource {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        if lower.starts_with("https://") || lower.starts_with("http://") {
            Ok(FeedSource::Url(s.to_string()))
        } else {
            Ok(FeedSource::Path(PathBuf::from(s)))
        }
    }
}

impl From<FeedSource> for String {
    fn from(s: FeedSource) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for FeedSource {
    type Error = std::convert::Infallible;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl fmt::Display for FeedSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedSource::Path(p) => write!(f, "{}", p.display()),
            FeedSource::Url(u) => f.write_str(u),
        }
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("feed source {0} not found")]
    NotFound(String),
    #[error("network error fetching {feed}: {message}")]
    Network { feed: String, message: String },
    #[error("I/O error reading {feed}: {message}")]
    Io { feed: String, message: String },
}

/// What the fetcher remembers about the last successful retrieval of a source.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchStamp {
    pub etag: Option<String>,
    pub last_modified: Option<String>,
    pub digest: String,
}

#[derive(Debug, Clone)]
pub enum Fetched {
    Fresh(Arc<Vec<u8>>),
    Unchanged,
}

impl Fetched {
    pub fn is_unchanged(&self) -> bool {
        matches!(self, Fetched::Unchanged)
    }
}

struct Remembered {
    stamp: FetchStamp,
    body: Arc<Vec<u8>>,
}

pub struct FeedFetcher {
    client: Client,
    seen: HashMap<FeedSource, Remembered>,
}

impl fmt::Debug for FeedFetcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeedFetcher").field("sources", &self.seen.len()).finish()
    }
}

fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl FeedFetcher {
    pub fn new() -> Result<Self, FetchError> {
        Self::with_timeout(Duration::from_secs(300))
    }

    pub fn with_timeout(timeout: Duration) -> Result<Self, FetchError> {
        let client = Client::builder().timeout(timeout).build().map_err(|e| FetchError::Network {
            feed: "<client>".into(),
            message: e.to_string(),
        })?;
        Ok(FeedFetcher { client, seen: HashMap::new() })
    }

    pub fn stamp(&self, source: &FeedSource) -> Option<&FetchStamp> {
        self.seen.get(source).map(|r| &r.stamp)
    }

    /// Last body retrieved for `source`, if any.
    pub fn last_body(&self, source: &FeedSource) -> Option<Arc<Vec<u8>>> {
        self.seen.get(source).map(|r| r.body.clone())
    }

    pub fn fetch(&mut self, source: &FeedSource) -> Result<Fetched, FetchError> {
        let (body, etag, last_modified) = match source {
            FeedSource::Path(p) => match std::fs::read(p) {
                Ok(b) => (b, None, None),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    return Err(FetchError::NotFound(source.to_string()))
                }
                Err(e) => return Err(FetchError::Io { feed: source.to_string(), message: e.to_string() }),
            },
            FeedSource::Url(url) => {
                let mut req = self.client.get(url);
                if let Some(prev) = self.seen.get(source) {
                    if let Some(etag) = &prev.stamp.etag {
                        req = req.header(IF_NONE_MATCH, etag);
                    }
                    if let Some(lm) = &prev.stamp.last_modified {
                        req = req.header(IF_MODIFIED_SINCE, lm);
                    }
                }
                let network = |e: reqwest::Error| FetchError::Network { feed: url.clone(), message: e.to_string() };
                let resp = req.send().map_err(network)?;
                match resp.status() {
                    StatusCode::NOT_MODIFIED if self.seen.contains_key(source) => return Ok(Fetched::Unchanged),
                    StatusCode::NOT_FOUND | StatusCode::GONE => return Err(FetchError::NotFound(url.clone())),
                    s if !s.is_success() => {
                        return Err(FetchError::Network { feed: url.clone(), message: format!("HTTP status {s}") })
                    }
                    _ => {}
                }
                let header = |name| resp.headers().get(name).and_then(|v: &reqwest::header::HeaderValue| v.to_str().ok()).map(String::from);
                let (etag, lm) = (header(ETAG), header(LAST_MODIFIED));
                let body = resp.bytes().map_err(network)?.to_vec();
                (body, etag, lm)
            }
        };
        let stamp = FetchStamp { etag, last_modified, digest: digest(&body) };
        if self.seen.get(source).is_some_and(|r| r.stamp.digest == stamp.digest) {
            self.seen.get_mut(source).unwrap().stamp = stamp;
            return Ok(Fetched::Unchanged);
        }
        let body = Arc::new(body);
        self.seen.insert(source.clone(), Remembered { stamp, body: body.clone() });
        Ok(Fetched::Fresh(body))
    }

    /// Fetches every source. Returns the current body of each source, in order,
    /// and whether any of them changed since the previous call.
    pub fn fetch_all(&mut self, sources: &[FeedSource]) -> Result<(bool, Vec<Arc<Vec<u8>>>), FetchError> {
        let mut changed = false;
        let mut bodies = Vec::with_capacity(sources.len());
        for s in sources {
            match self.fetch(s)? {
                Fetched::Fresh(b) => {
                    changed = true;
                    bodies.push(b);
                }
                Fetched::Unchanged => bodies.push(self.last_body(s).expect("unchanged implies a stored body")),
            }
        }
        Ok((changed, bodies))
    }
}
