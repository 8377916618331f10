use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{load_csv, Dataset, Schema};
use crate::error::{Error, Result};

/// Environment variable naming the directory that holds `datasets.toml`
/// and the dataset files it references.
pub const DATA_DIR_ENV: &str = "FAIRADJ_DATA_DIR";

pub const MANIFEST_FILE: &str = "datasets.toml";

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    #[serde(flatten)]
    pub schema: Schema,
}

/// Dataset name -> file + schema, read from a TOML key-value file.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: BTreeMap<String, ManifestEntry>,
}

/// `$FAIRADJ_DATA_DIR` if set, else the repository's `data/` directory.
pub fn default_data_root() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

impl Manifest {
    pub fn parse(root: impl Into<PathBuf>, text: &str) -> Result<Self> {
        let entries: BTreeMap<String, ManifestEntry> =
            toml::from_str(text).map_err(|e| Error::Schema(format!("manifest: {e}")))?;
        Ok(Manifest {
            root: root.into(),
            entries,
        })
    }

    /// Reads `<root>/datasets.toml`.
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let file = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        Self::parse(root, &text)
    }

    pub fn load_default() -> Result<Self> {
        Self::load(default_data_root())
    }

    pub fn entry(&self, name: &str) -> Result<&ManifestEntry> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::UnknownDataset(name.to_string()))
    }

    pub fn load_dataset(&self, name: &str) -> Result<Dataset> {
        let entry = self.entry(name)?;
        load_csv(self.root.join(&entry.path), &entry.schema)
    }
}
