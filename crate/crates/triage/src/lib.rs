//! Inventory store, CPE assignment, CVE alert triage and the HTTP/JSON API.

pub mod api;
pub mod config;
pub mod error;
pub mod import;
pub mod service;
pub mod store;

pub use config::{FeedsConfig, ServiceConfig};
pub use error::TriageError;
pub use service::TriageService;
