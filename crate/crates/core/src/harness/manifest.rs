//! Dataset manifests: CSV files with header `path,label,laterality,split`.
//!
//! Relative image paths resolve against the manifest's own directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::preprocess::pgm::read_pgm;
use crate::preprocess::{preprocess_pipeline, Laterality};

pub const MANIFEST_HEADER: [&str; 4] = ["path", "label", "laterality", "split"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Validation),
            other => Err(format!("split must be train or val, got {other:?}")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "val",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    /// As written in the manifest.
    pub path: PathBuf,
    /// 0 = benign, 1 = malignant.
    pub label: usize,
    pub laterality: Laterality,
    pub split: Split,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.path)
    }

    /// Entries of one split, in manifest order.
    pub fn split(&self, split: Split) -> DatasetManifest {
        DatasetManifest {
            entries: self.entries.iter().filter(|e| e.split == split).cloned().collect(),
            base_dir: self.base_dir.clone(),
        }
    }

    /// Reads and preprocesses every image (in parallel) into network inputs of
    /// size `input` = (height, width). Order follows the manifest.
    pub fn load_dataset(&self, input: (usize, usize)) -> Result<Dataset> {
        let images = self
            .entries
            .par_iter()
            .map(|entry| {
                let path = self.resolve(entry);
                let image = read_pgm(&path)?.with_laterality(entry.laterality);
                preprocess_pipeline(&image, input).map_err(|e| e.context(format!("preprocessing {}", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(images, self.entries.iter().map(|e| e.label).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = MANIFEST_HEADER.join(",");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!("{},{},{},{}\n", e.path.display(), e.label, e.laterality, e.split));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Parses and validates a manifest. Every referenced image must exist; a
/// missing one is reported as an I/O error on its path, tagged with the
/// manifest line.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = parse_manifest(&text, path, base_dir)?;
    for (i, entry) in manifest.entries.iter().enumerate() {
        let resolved = manifest.resolve(entry);
        std::fs::metadata(&resolved)
            .map_err(|e| Error::io(&resolved, e).context(format!("{} line {}", path.display(), i + 2)))?;
    }
    if manifest.is_empty() {
        log::warn!("manifest {} has no entries", path.display());
    }
    Ok(manifest)
}

/// Parses manifest text without touching the filesystem. `origin` names the
/// source in error messages.
pub fn parse_manifest(text: &str, origin: &Path, base_dir: PathBuf) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse(origin, Some(1), e.to_string()))?
        .clone();
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(Error::parse(
            origin,
            Some(1),
            format!("header must be {}, got {}", MANIFEST_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize);
            Error::parse(origin, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize);
        let bad = |msg: String| Error::parse(origin, line, msg);
        let path = &record[0];
        if path.is_empty() {
            return Err(bad("empty image path".into()));
        }
        let label = match &record[1] {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(format!("label must be 0 or 1, got {other:?}"))),
        };
        let laterality: Laterality = record[2].parse().map_err(bad)?;
        let split: Split = record[3].parse().map_err(bad)?;
        entries.push(ManifestEntry {
            path: PathBuf::from(path),
            label,
            laterality,
            split,
        });
    }
    Ok(DatasetManifest { entries, base_dir })
}
