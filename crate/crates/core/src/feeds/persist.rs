//! On-disk snapshot layout, version 1.
//!
//! ```text
//! <dir>/manifest.json     {"format":"iva-snapshot","version":1,"snapshot_time":...,
//!                          "dictionary_entries":N,"cve_entries":M}
//! <dir>/dictionary.jsonl  one CpeDictEntry per line, ordered by canonical URI
//! <dir>/cves.jsonl        one CveEntry per line, ordered by CVE id
//! ```
//!
//! WFNs are not stored; they are re-derived from the URIs on load.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use super::{build_snapshot, CatalogSnapshot, IngestError};

pub const SNAPSHOT_FORMAT: &str = "iva-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("snapshot I/O error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad snapshot record in {path} line {line}: {message}")]
    Record { path: PathBuf, line: usize, message: String },
    #[error("unsupported snapshot format {format:?} version {version}")]
    Version { format: String, version: u32 },
    #[error("snapshot content is inconsistent: {0}")]
    Content(#[from] IngestError),
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    snapshot_time: DateTime<Utc>,
    dictionary_entries: usize,
    cve_entries: usize,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PersistError + '_ {
    move |source| PersistError::Io { path: path.to_path_buf(), source }
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PersistError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| PersistError::Record {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PersistError> {
    let r = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PersistError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Writes `snapshot` into `dir`, creating it if needed. Files are written to
/// temporary names and renamed into place.
pub fn save_snapshot(snapshot: &CatalogSnapshot, dir: &Path) -> Result<(), PersistError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = Manifest {
        format: SNAPSHOT_FORMAT.into(),
        version: SNAPSHOT_VERSION,
        snapshot_time: snapshot.snapshot_time(),
        dictionary_entries: snapshot.dictionary().len(),
        cve_entries: snapshot.cves().len(),
    };
    let staged = |name: &str| dir.join(format!(".{name}.tmp"));
    write_jsonl(&staged("dictionary.jsonl"), snapshot.dictionary())?;
    write_jsonl(&staged("cves.jsonl"), snapshot.cves())?;
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(staged("manifest.json"), manifest_json + "\n").map_err(io_err(dir))?;
    // manifest last, so a reader never sees a manifest for half-written data
    for name in ["dictionary.jsonl", "cves.jsonl", "manifest.json"] {
        fs::rename(staged(name), dir.join(name)).map_err(io_err(dir))?;
    }
    Ok(())
}

pub fn load_snapshot(dir: &Path) -> Result<CatalogSnapshot, PersistError> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| PersistError::Record {
        path: manifest_path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if manifest.format != SNAPSHOT_FORMAT || manifest.version != SNAPSHOT_VERSION {
        return Err(PersistError::Version { format: manifest.format, version: manifest.version });
    }
    let dictionary = read_jsonl(&dir.join("dictionary.jsonl"))?;
    let cves = read_jsonl(&dir.join("cves.jsonl"))?;
    let snapshot = build_snapshot(dictionary, cves, manifest.snapshot_time)?;
    if snapshot.dictionary().len() != manifest.dictionary_entries || snapshot.cves().len() != manifest.cve_entries {
        return Err(PersistError::Record {
            path: manifest_path,
            line: 0,
            message: "record counts do not match the manifest".into(),
        });
    }
    Ok(snapshot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeds::{parse_cpe_dictionary, parse_cve_feed};

    #[test]
    fn save_and_load_round_trip() {
        let dict = br#"<cpe-list>
<cpe-item name="cpe:/a:adobe:flash_playe_for_linux:9.0.115.0" deprecated="true" deprecated_by="cpe:/a:adobe:flash_player_for_linux:9.0.115.0"><title>typo</title><cpe23-item name="cpe:2.3:a:adobe:flash_playe_for_linux:9.0.115.0:*:*:*:*:*:*:*"/></cpe-item>
<cpe-item name="cpe:/a:adobe:flash_player_for_linux:9.0.115.0"><title>Flash</title></cpe-item>
<cpe-item name="cpe:/a:microsoft:internet_explorer:8.*::en~-~~windows~x86~"><title>IE</title></cpe-item>
</cpe-list>"#;
        let feed = br#"<nvd><entry id="CVE-2016-0006"><vuln:vulnerable-software-list><vuln:product>cpe:/o:microsoft:windows_10:-</vuln:product></vuln:vulnerable-software-list><vuln:published-datetime>2016-01-13T00:59:03.727-05:00</vuln:published-datetime><vuln:cvss><cvss:base_metrics><cvss:score>7.2</cvss:score></cvss:base_metrics></vuln:cvss><vuln:summary>text</vuln:summary></entry></nvd>"#;
        let t = DateTime::parse_from_rfc3339("2017-02-14T00:00:00Z").unwrap().with_timezone(&Utc);
        let snap = build_snapshot(
            parse_cpe_dictionary(&dict[..]).unwrap().entries,
            parse_cve_feed(&feed[..]).unwrap().entries,
            t,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_snapshot(&snap, dir.path()).unwrap();
        let loaded = load_snapshot(dir.path()).unwrap();
        assert_eq!(loaded, snap);
        assert_eq!(loaded.deprecation_map().len(), 1);

        // saving is canonical: same snapshot, same bytes
        let dir2 = tempfile::tempdir().unwrap();
        save_snapshot(&loaded, dir2.path()).unwrap();
        for f in ["manifest.json", "dictionary.jsonl", "cves.jsonl"] {
            assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(dir2.path().join(f)).unwrap());
        }
    }

    #[test]
    fn rejects_unknown_version_and_missing_dir() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_snapshot(dir.path()), Err(PersistError::Io { .. })));
        fs::write(
            dir.path().join("manifest.json"),
            r#"{"format":"iva-snapshot","version":99,"snapshot_time":"2017-01-01T00:00:00Z","dictionary_entries":0,"cve_entries":0}"#,
        )
        .unwrap();
        assert!(matches!(load_snapshot(dir.path()), Err(PersistError::Version { version: 99, .. })));
    }
}
