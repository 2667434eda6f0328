use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::KeyLabel;
use crate::error::{Result, StoneError};

/// Split tag given to rows that leave the column empty.
pub const DEFAULT_SPLIT: &str = "train";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Audio path, relative to the manifest's directory unless absolute.
    pub path: PathBuf,
    pub key: Option<KeyLabel>,
    pub split: String,
}

/// A list of audio files with optional key labels.
///
/// Stored as CSV with header `path,key,split`; `key` and `split` may be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub version: u32,
    /// Directory against which relative entry paths resolve.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct Row {
    path: String,
    #[serde(default)]
    key: Option<String>,
    #[serde(default)]
    split: Option<String>,
}

impl DatasetManifest {
    pub fn new(
        name: impl Into<String>,
        root: impl Into<PathBuf>,
        entries: Vec<ManifestEntry>,
    ) -> Result<Self> {
        let manifest = DatasetManifest {
            name: name.into(),
            version: 1,
            root: root.into(),
            entries,
        };
        manifest.check_unique(Path::new(&manifest.name))?;
        Ok(manifest)
    }

    /// Parse CSV content; `source` only labels error messages.
    pub fn parse<R: Read>(reader: R, source: &Path, root: PathBuf) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut entries = Vec::new();
        for (i, record) in csv.deserialize::<Row>().enumerate() {
            let row = i + 1;
            let err = |message: String| StoneError::Manifest {
                path: source.to_path_buf(),
                row,
                message,
            };
            let record = record.map_err(|e| err(e.to_string()))?;
            if record.path.is_empty() {
                return Err(err("empty path".into()));
            }
            let key = match record.key.as_deref() {
                None | Some("") => None,
                Some(s) => Some(s.parse::<KeyLabel>().map_err(|e| err(e.to_string()))?),
            };
            let split = match record.split {
                Some(s) if !s.is_empty() => s,
                _ => DEFAULT_SPLIT.to_string(),
            };
            entries.push(ManifestEntry {
                path: PathBuf::from(record.path),
                key,
                split,
            });
        }
        let name = source
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let manifest = DatasetManifest {
            name,
            version: 1,
            root,
            entries,
        };
        manifest.check_unique(source)?;
        Ok(manifest)
    }

    fn check_unique(&self, source: &Path) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if !seen.insert(&e.path) {
                return Err(StoneError::Manifest {
                    path: source.to_path_buf(),
                    row: i + 1,
                    message: format!("duplicate path {}", e.path.display()),
                });
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["path", "key", "split"])?;
        for e in &self.entries {
            let key = e.key.map(|k| k.to_string()).unwrap_or_default();
            csv.write_record([
                e.path.to_string_lossy().as_ref(),
                key.as_str(),
                e.split.as_str(),
            ])?;
        }
        csv.flush().map_err(|e| StoneError::io(&self.root, e))?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| StoneError::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Absolute location of an entry's audio.
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    pub fn labeled(&self) -> impl Iterator<Item = (&ManifestEntry, KeyLabel)> {
        self.entries.iter().filter_map(|e| e.key.map(|k| (e, k)))
    }

    pub fn n_labeled(&self) -> usize {
        self.labeled().count()
    }

    /// Entries whose split tag equals `split`.
    pub fn split(&self, split: &str) -> DatasetManifest {
        self.filtered(|e| e.split == split)
    }

    pub fn filtered(&self, keep: impl Fn(&ManifestEntry) -> bool) -> DatasetManifest {
        DatasetManifest {
            name: self.name.clone(),
            version: self.version,
            root: self.root.clone(),
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }
}

/// Load and validate a CSV manifest. Audio files are not touched.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let file = std::fs::File::open(path).map_err(|e| StoneError::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    DatasetManifest::parse(std::io::BufReader::new(file), path, root)
}
