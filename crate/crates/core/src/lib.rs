//! Core engine: CPE naming, NVD feed ingestion, CPE candidate search and
//! CVE matching, and consistency audits over ingested catalogs.

pub mod audit;
pub mod feeds;
pub mod matching;
pub mod naming;
