//! EP-pair datasets and the plain-text files that carry them.

mod manifest;
mod parse;
mod predictions;
mod record;
mod synth;
mod validate;

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use manifest::{read_manifest, write_manifest, FoldManifest, SplitKind};
pub use parse::{parse_dataset, write_dataset, ColumnMap, ParseOptions};
pub use predictions::{read_predictions, write_predictions};
pub use record::{Chromosome, Dataset, EPRecord, NUCLEOTIDES};
pub use synth::{generate_synthetic, planted_motifs, MotifMode, MotifPair, SyntheticConfig};
pub use validate::{validate_dataset, ValidationReport};

/// Content errors collected before a parse gives up.
pub const MAX_CONTENT_ERRORS: usize = 100;

/// A problem tied to one data row (1-based, header excluded).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub row: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at row {}", self.message, self.row)
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {message}")]
    Structural { row: usize, message: String },
    #[error("{} content error(s), first: {}", .0.len(), .0[0])]
    Content(Vec<RowError>),
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("manifest invariant violated: {0}")]
    ManifestInvariant(String),
    #[error("manifest line {line}: {message}")]
    ManifestFormat { line: usize, message: String },
    #[error("predictions line {line}: {message}")]
    Predictions { line: usize, message: String },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// Short content hash over an ordered list of pair ids.
pub fn id_hash<'a>(ids: impl IntoIterator<Item = &'a str>) -> String {
    let mut hasher = Sha256::new();
    for id in ids {
        hasher.update(id.as_bytes());
        hasher.update(b"\n");
    }
    hex16(&hasher.finalize())
}

pub(crate) fn hex16(digest: &[u8]) -> String {
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
