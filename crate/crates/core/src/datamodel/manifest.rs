//! Dataset manifests.
//!
//! ```json
//! {
//!   "classes": ["brush_hair", "cartwheel"],
//!   "videos": [
//!     {"id": "v0", "label": 0, "frame_count": 30,
//!      "sources": {"fc6": "v0.fc6.desc", "pool5": "v0.pool5.desc"},
//!      "pool5_side": 7}
//!   ],
//!   "splits": {"split1": {"train": ["v0"], "test": ["v1"]}}
//! }
//! ```
//!
//! Relative source paths are resolved against the manifest's directory.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    pub label: usize,
    pub frame_count: usize,
    pub sources: BTreeMap<String, PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool5_side: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub videos: Vec<VideoRecord>,
    pub splits: BTreeMap<String, Split>,
    /// Directory relative source paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Dataset {
    /// Checks every structural invariant (not file existence).
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Manifest("no classes".into()));
        }
        let mut ids = HashSet::new();
        for v in &self.videos {
            if !ids.insert(v.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate video id `{}`", v.id)));
            }
            if v.label >= self.classes.len() {
                return Err(Error::Manifest(format!(
                    "video `{}` has label {} but there are only {} classes",
                    v.id,
                    v.label,
                    self.classes.len()
                )));
            }
            if v.frame_count == 0 {
                return Err(Error::Manifest(format!("video `{}` has zero frames", v.id)));
            }
            if v.pool5_side == Some(0) {
                return Err(Error::Manifest(format!("video `{}` has pool5_side 0", v.id)));
            }
        }
        for (name, split) in &self.splits {
            for id in split.train.iter().chain(&split.test) {
                if !ids.contains(id.as_str()) {
                    return Err(Error::UnknownVideo {
                        split: name.clone(),
                        id: id.clone(),
                    });
                }
            }
            let train: HashSet<&str> = split.train.iter().map(String::as_str).collect();
            if let Some(id) = split.test.iter().find(|id| train.contains(id.as_str())) {
                return Err(Error::SplitLeakage {
                    split: name.clone(),
                    id: id.clone(),
                });
            }
        }
        Ok(())
    }

    /// Checks that every referenced source file exists.
    pub fn check_sources(&self) -> Result<()> {
        for v in &self.videos {
            for (layer, path) in &v.sources {
                let full = self.resolve(path);
                if !full.is_file() {
                    return Err(Error::MissingSource {
                        id: v.id.clone(),
                        layer: layer.clone(),
                        path: full,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn video_index(&self) -> HashMap<&str, &VideoRecord> {
        self.videos.iter().map(|v| (v.id.as_str(), v)).collect()
    }

    pub fn video(&self, id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.id == id)
    }

    pub fn split(&self, name: &str) -> Result<&Split> {
        self.splits
            .get(name)
            .ok_or_else(|| Error::param(format!("split `{name}` not found in manifest")))
    }

    /// Full path of `layer` for video `id`.
    pub fn source_path(&self, id: &str, layer: &str) -> Result<PathBuf> {
        let v = self.video(id).ok_or_else(|| Error::UnknownVideo {
            split: "-".into(),
            id: id.into(),
        })?;
        let p = v.sources.get(layer).ok_or_else(|| Error::MissingSource {
            id: id.into(),
            layer: layer.into(),
            path: PathBuf::from("<no entry>"),
        })?;
        Ok(self.resolve(p))
    }
}

/// Parses and fully validates a manifest, including source-file existence.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ds: Dataset = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    ds.base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    ds.validate()?;
    ds.check_sources()?;
    Ok(ds)
}

pub fn write_manifest(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(ds).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
