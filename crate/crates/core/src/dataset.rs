//! On-disk layout of an atlas data directory.
//!
//! ```text
//! references.json   source records (required)
//! languages.json    language metadata (required)
//! features.json     typological overlays (optional)
//! locations.tsv     geocode cache used as the gazetteer (optional)
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{load_corpus, Corpus, CorpusError, ValidationReport};
use crate::geocode::{GeocodeCache, GeocodeError};

pub const REFERENCES_FILE: &str = "references.json";
pub const LANGUAGES_FILE: &str = "languages.json";
pub const FEATURES_FILE: &str = "features.json";
pub const LOCATIONS_FILE: &str = "locations.tsv";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Cache { path: PathBuf, source: GeocodeError },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl DatasetError {
    /// The validation findings behind this error, one per line.
    pub fn report(&self) -> ValidationReport {
        match self {
            DatasetError::Corpus(CorpusError::Invalid(r)) => r.clone(),
            other => {
                let mut r = ValidationReport::default();
                r.findings.push(crate::corpus::Finding {
                    severity: crate::corpus::Severity::Error,
                    subject: "dataset".into(),
                    field: None,
                    message: other.to_string(),
                });
                r
            }
        }
    }
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_optional(path: &Path) -> Result<Option<String>, DatasetError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}

/// Reads the geocode cache of a data directory; empty when absent.
pub fn load_cache(path: &Path) -> Result<GeocodeCache, DatasetError> {
    match read_optional(path)? {
        None => Ok(GeocodeCache::new()),
        Some(text) => GeocodeCache::from_tsv(&text).map_err(|source| DatasetError::Cache {
            path: path.to_path_buf(),
            source,
        }),
    }
}

/// Loads and validates a data directory, attaching its gazetteer.
pub fn load_dir(dir: &Path) -> Result<Corpus, DatasetError> {
    let references = read(&dir.join(REFERENCES_FILE))?;
    let languages = read(&dir.join(LANGUAGES_FILE))?;
    let features = read_optional(&dir.join(FEATURES_FILE))?;
    let cache = load_cache(&dir.join(LOCATIONS_FILE))?;
    let corpus = load_corpus(&references, &languages, features.as_deref())?;
    Ok(corpus.with_gazetteer(&cache))
}
