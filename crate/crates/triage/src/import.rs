//! Inventory file formats.
//!
//! CSV: a header row naming `external_id`, `vendor`, `product` and `version`
//! (any order, extra columns ignored). JSON: an array of objects with the
//! same keys. `vendor` and `version` may be empty; `product` may not.

use iva_core::matching::InventoryProduct;
use serde::{Deserialize, Serialize};

use crate::error::TriageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InventoryFormat {
    Csv,
    Json,
}

impl InventoryFormat {
    /// Picks the format from a file name, falling back to the first
    /// non-blank byte (`[` means JSON).
    pub fn detect(file_name: Option<&str>, bytes: &[u8]) -> Self {
        match file_name.and_then(|n| n.rsplit_once('.')).map(|(_, ext)| ext.to_ascii_lowercase()) {
            Some(ext) if ext == "json" => InventoryFormat::Json,
            Some(ext) if ext == "csv" => InventoryFormat::Csv,
            _ => match bytes.iter().find(|b| !b.is_ascii_whitespace()) {
                Some(b'[') => InventoryFormat::Json,
                _ => InventoryFormat::Csv,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based record number (header excluded).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Deserialize)]
struct Record {
    external_id: String,
    #[serde(default)]
    vendor: String,
    product: String,
    #[serde(default)]
    version: String,
}

fn validate(row: usize, r: Record) -> Result<InventoryProduct, RowError> {
    let err = |reason: &str| RowError { row, reason: reason.into() };
    if r.external_id.trim().is_empty() {
        return Err(err("external_id is blank"));
    }
    if r.product.trim().is_empty() {
        return Err(err("product is blank"));
    }
    Ok(InventoryProduct::new(r.external_id.trim(), r.vendor.trim(), r.product.trim(), r.version.trim()))
}

/// Parses an inventory file into products plus per-row errors.
pub fn parse_inventory(bytes: &[u8], format: InventoryFormat) -> Result<(Vec<InventoryProduct>, Vec<RowError>), TriageError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(TriageError::EmptyFile);
    }
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    match format {
        InventoryFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Headers).flexible(true).from_reader(bytes);
            let headers = rdr.headers().map_err(|e| TriageError::Format(e.to_string()))?.clone();
            for required in ["external_id", "product"] {
                if !headers.iter().any(|h| h == required) {
                    return Err(TriageError::Format(format!("missing CSV column {required}")));
                }
            }
            for (i, rec) in rdr.records().enumerate() {
                let row = i + 1;
                let parsed = rec
                    .and_then(|r| r.deserialize::<Record>(Some(&headers)))
                    .map_err(|e| RowError { row, reason: e.to_string() })
                    .and_then(|r| validate(row, r));
                match parsed {
                    Ok(p) => ok.push(p),
                    Err(e) => bad.push(e),
                }
            }
        }
        InventoryFormat::Json => {
            let values: Vec<serde_json::Value> = serde_json::from_slice(bytes).map_err(|e| TriageError::Format(e.to_string()))?;
            for (i, v) in values.into_iter().enumerate() {
                let row = i + 1;
                let parsed = serde_json::from_value::<Record>(v)
                    .map_err(|e| RowError { row, reason: e.to_string() })
                    .and_then(|r| validate(row, r));
                match parsed {
                    Ok(p) => ok.push(p),
                    Err(e) => bad.push(e),
                }
            }
        }
    }
    if ok.is_empty() && bad.is_empty() {
        return Err(TriageError::EmptyFile);
    }
    Ok((ok, bad))
}
