use thiserror::Error;

#[derive(Debug, Error)]
pub enum TriageError {
    #[error("unknown product {0}")]
    UnknownProduct(i64),
    #[error("no catalog snapshot is loaded")]
    NoSnapshot,
    #[error("product {0} has no assigned CPE")]
    Unassigned(i64),
    #[error("invalid WFN: {0}")]
    InvalidWfn(String),
    #[error("alerts already decided: {0:?}")]
    AlreadyDecided(Vec<i64>),
    #[error("unknown alerts: {0:?}")]
    UnknownAlert(Vec<i64>),
    #[error("unknown alert group {group} for product {product}")]
    UnknownGroup { product: i64, group: String },
    #[error("decision request must name alert ids or a product and group id")]
    EmptySelection,
    #[error("inventory file has no records")]
    EmptyFile,
    #[error("inventory format error: {0}")]
    Format(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("store error: {0}")]
    Store(#[from] rusqlite::Error),
    #[error("stored data is corrupt: {0}")]
    Corrupt(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl TriageError {
    /// Stable machine-readable code used in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            TriageError::UnknownProduct(_) => "UNKNOWN_PRODUCT",
            TriageError::NoSnapshot => "NO_SNAPSHOT",
            TriageError::Unassigned(_) => "UNASSIGNED",
            TriageError::InvalidWfn(_) => "INVALID_WFN",
            TriageError::AlreadyDecided(_) => "ALREADY_DECIDED",
            TriageError::UnknownAlert(_) => "UNKNOWN_ALERT",
            TriageError::UnknownGroup { .. } => "UNKNOWN_GROUP",
            TriageError::EmptySelection => "EMPTY_SELECTION",
            TriageError::EmptyFile => "EMPTY_FILE",
            TriageError::Format(_) => "FORMAT_ERROR",
            TriageError::Config(_) => "CONFIG_ERROR",
            TriageError::Store(_) | TriageError::Corrupt(_) | TriageError::Io(_) => "INTERNAL",
        }
    }
}
