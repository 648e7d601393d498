//! Service configuration, read from TOML.
//!
//! ```toml
//! store = "iva.sqlite"
//! snapshot = "snapshot"           # directory; loaded at startup, rewritten on rescan
//! listen = "127.0.0.1:8080"
//! token = "change-me"             # optional bearer token for the API
//! rescan_interval_secs = 86400    # optional; omit or 0 to disable
//! max_distance = 2
//! strict_summary = false
//!
//! [feeds]
//! dictionary = "https://nvd.nist.gov/feeds/xml/cpe/dictionary/official-cpe-dictionary_v2.3.xml.gz"
//! cve = ["https://nvd.nist.gov/feeds/xml/cve/2.0/nvdcve-2.0-2016.xml.gz"]
//! ```

use std::path::{Path, PathBuf};

use iva_core::feeds::FeedSource;
use iva_core::matching::MatchConfig;
use serde::{Deserialize, Serialize};

use crate::error::TriageError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedsConfig {
    pub dictionary: FeedSource,
    #[serde(default)]
    pub cve: Vec<FeedSource>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub store: PathBuf,
    #[serde(default)]
    pub snapshot: Option<PathBuf>,
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default)]
    pub token: Option<String>,
    #[serde(default)]
    pub rescan_interval_secs: Option<u64>,
    #[serde(default = "default_distance")]
    pub max_distance: usize,
    #[serde(default)]
    pub strict_summary: bool,
    #[serde(default)]
    pub feeds: Option<FeedsConfig>,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_distance() -> usize {
    MatchConfig::default().max_distance
}

impl ServiceConfig {
    pub fn new(store: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            store: store.into(),
            snapshot: None,
            listen: default_listen(),
            token: None,
            rescan_interval_secs: None,
            max_distance: default_distance(),
            strict_summary: false,
            feeds: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, TriageError> {
        toml::from_str(text).map_err(|e| TriageError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, TriageError> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.store);
        if let Some(s) = cfg.snapshot.as_mut() {
            rebase(s);
        }
        if let Some(feeds) = cfg.feeds.as_mut() {
            for src in std::iter::once(&mut feeds.dictionary).chain(feeds.cve.iter_mut()) {
                if let FeedSource::Path(p) = src {
                    rebase(p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig { max_distance: self.max_distance, strict_summary: self.strict_summary }
    }
}
