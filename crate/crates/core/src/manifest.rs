//! Dataset manifest: `image_id,path,mos,split` CSV.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    /// Image or feature file; relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    /// Ground truth on the 0–100 scale.
    pub mos: f64,
    /// `None` until the manifest has been split.
    #[serde(with = "split_column")]
    pub split: Option<Split>,
}

mod split_column {
    use super::Split;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Split>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(v.map(Split::as_str).unwrap_or(""))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Split>, D::Error> {
        let s = String::deserialize(d)?;
        match s.trim() {
            "" => Ok(None),
            other => other.parse().map(Some).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative entry paths resolve against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Self {
            entries,
            base_dir: base_dir.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.image_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate image_id '{}'",
                    e.image_id
                )));
            }
            if !(0.0..=100.0).contains(&e.mos) {
                return Err(Error::Validation(format!(
                    "{}: MOS {} outside [0, 100]",
                    e.image_id, e.mos
                )));
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["image_id", "path", "mos", "split"] {
            return Err(Error::Validation(format!(
                "{}: expected header image_id,path,mos,split",
                path.display()
            )));
        }
        let entries = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<ManifestEntry>, _>>()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(entries, base)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == Some(split))
    }

    /// Seeded random assignment: `ceil(ratio * N)` entries go to TRAIN, the
    /// rest to TEST. Entry order is preserved.
    pub fn assign_split(&mut self, ratio: f64, seed: u64) -> Result<()> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Validation(format!(
                "split ratio {ratio} must lie in (0, 1)"
            )));
        }
        let n = self.entries.len();
        let n_train = ((ratio * n as f64).ceil() as usize).min(n);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_from_seed(seed));
        for (rank, &i) in order.iter().enumerate() {
            self.entries[i].split = Some(if rank < n_train {
                Split::Train
            } else {
                Split::Test
            });
        }
        Ok(())
    }
}
