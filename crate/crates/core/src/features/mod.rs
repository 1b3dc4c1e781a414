//! Per-patch feature extraction backends and the feature-sequence file format.

mod fseq;
mod stat;

use std::path::{Path, PathBuf};

pub use fseq::{decode_feature_sequence, encode_feature_sequence, read_feature_file, write_feature_file, FSEQ_MAGIC, FSEQ_VERSION};
pub use stat::{stat_features, STAT_CELLS, STAT_DIM, STAT_MIN_PATCH};

use crate::error::{Error, ItemError, Result};
use crate::manifest::ManifestEntry;
use crate::types::{FeatureSequence, Patch};

/// Default width of externally computed deep features (pooled ResNet-50).
pub const EXTERNAL_FEATURE_DIM: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureBackend {
    /// Reads sequences produced elsewhere (`<dir>/<image_id>.fseq`).
    FileLoader { dir: PathBuf, dim: usize },
    /// Deterministic per-cell luma statistics.
    StatFeatures,
}

impl FeatureBackend {
    pub fn file_loader(dir: impl Into<PathBuf>) -> Self {
        FeatureBackend::FileLoader {
            dir: dir.into(),
            dim: EXTERNAL_FEATURE_DIM,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureBackend::FileLoader { dim, .. } => *dim,
            FeatureBackend::StatFeatures => STAT_DIM,
        }
    }

    pub fn extract_features(&self, patch: &Patch) -> Result<Vec<f64>> {
        match self {
            FeatureBackend::FileLoader { .. } => Err(Error::UnsupportedMode(
                "file loader cannot extract features from pixels",
            )),
            FeatureBackend::StatFeatures => stat_features(patch),
        }
    }
}

pub fn feature_path(dir: &Path, image_id: &str) -> PathBuf {
    dir.join(format!("{image_id}.fseq"))
}

/// Loads the sequences of `entries` from `dir`, collecting every missing or
/// malformed file into one itemized error.
pub fn load_sequences<'a>(
    dir: &Path,
    entries: impl IntoIterator<Item = &'a ManifestEntry>,
) -> Result<Vec<FeatureSequence>> {
    let mut out = Vec::new();
    let mut failed = Vec::new();
    for e in entries {
        let path = feature_path(dir, &e.image_id);
        match read_feature_file(&path) {
            Ok(seq) => out.push(seq),
            Err(err) => failed.push(ItemError {
                id: e.image_id.clone(),
                path,
                reason: err.to_string(),
            }),
        }
    }
    if failed.is_empty() {
        Ok(out)
    } else {
        Err(Error::Itemized(failed))
    }
}
