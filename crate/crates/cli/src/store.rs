//! On-disk run store shared by the CLI and the annotation service.
//!
//! Layout under the root:
//! `datasets/`, `models/`, `reports/`, and `runs/<run-id>/` holding
//! `run.json`, `heatmaps.scr1`, `manifest.json`, `images/` and, once a
//! selection was made, `selection.json`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use score_core::detection::{self, Manifest, Selection, SelectionSource};
use score_core::fsutil;

pub const ROOT_ENV: &str = "SCORE_LAB_ROOT";
pub const SELECTION_FILE: &str = "selection.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{message}")]
    Invalid { message: String, offending_ids: Vec<usize> },
    #[error(transparent)]
    Core(#[from] score_core::Error),
}

pub type StoreResult<T> = std::result::Result<T, StoreError>;

/// A selection as persisted, with its revision counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSelection {
    pub run_id: String,
    pub class_id: usize,
    pub sample_ids: Vec<usize>,
    pub source: SelectionSource,
    pub revision: u64,
}

impl StoredSelection {
    pub fn selection(&self) -> Selection {
        Selection {
            run_id: self.run_id.clone(),
            class_id: self.class_id,
            sample_ids: self.sample_ids.clone(),
            source: self.source,
        }
    }
}

/// Body accepted when submitting a selection. Run and class default to the
/// target run's.
#[derive(Debug, Clone, Deserialize)]
pub struct SelectionRequest {
    pub run_id: Option<String>,
    pub class_id: Option<usize>,
    pub sample_ids: Vec<usize>,
    pub source: Option<SelectionSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub class_id: usize,
    pub n_ref: usize,
    pub entries: usize,
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunStore { root: root.into() }
    }

    /// `explicit`, else `$SCORE_LAB_ROOT`, else `./score-lab`.
    pub fn resolve(explicit: Option<&Path>) -> Self {
        match explicit {
            Some(p) => RunStore::new(p),
            None => match std::env::var_os(ROOT_ENV) {
                Some(v) => RunStore::new(PathBuf::from(v)),
                None => RunStore::new("score-lab"),
            },
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    /// Directory for `run_id`, whether or not it exists yet.
    pub fn run_path(&self, run_id: &str) -> StoreResult<PathBuf> {
        if !valid_name(run_id) {
            return Err(StoreError::NotFound(format!("run {run_id:?}")));
        }
        Ok(self.runs_dir().join(run_id))
    }

    /// Directory of an existing run.
    pub fn run_dir(&self, run_id: &str) -> StoreResult<PathBuf> {
        let dir = self.run_path(run_id)?;
        if dir.join(detection::MANIFEST_FILE).is_file() {
            Ok(dir)
        } else {
            Err(StoreError::NotFound(format!("run {run_id:?}")))
        }
    }

    pub fn list_runs(&self) -> StoreResult<Vec<RunSummary>> {
        let dir = self.runs_dir();
        let mut out = Vec::new();
        let entries = match std::fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(score_core::Error::io(&dir, e).into()),
        };
        for entry in entries {
            let entry = entry.map_err(|e| score_core::Error::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Ok(manifest) = self.manifest(&name) {
                out.push(RunSummary {
                    run_id: manifest.run_id,
                    class_id: manifest.class_id,
                    n_ref: manifest.n_ref,
                    entries: manifest.entries.len(),
                });
            }
        }
        out.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        Ok(out)
    }

    pub fn manifest_bytes(&self, run_id: &str) -> StoreResult<Vec<u8>> {
        let path = self.run_dir(run_id)?.join(detection::MANIFEST_FILE);
        std::fs::read(&path).map_err(|e| score_core::Error::io(&path, e).into())
    }

    pub fn manifest(&self, run_id: &str) -> StoreResult<Manifest> {
        Ok(serde_json::from_slice(&self.manifest_bytes(run_id)?).map_err(score_core::Error::from)?)
    }

    pub fn image_bytes(&self, run_id: &str, file: &str) -> StoreResult<Vec<u8>> {
        if !valid_name(file) {
            return Err(StoreError::NotFound(format!("image {file:?}")));
        }
        let path = detection::image_path(&self.run_dir(run_id)?, file);
        match std::fs::read(&path) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(StoreError::NotFound(format!("image {file:?}"))),
            Err(e) => Err(score_core::Error::io(&path, e).into()),
        }
    }

    pub fn selection(&self, run_id: &str) -> StoreResult<Option<StoredSelection>> {
        let path = self.run_dir(run_id)?.join(SELECTION_FILE);
        if !path.is_file() {
            return Ok(None);
        }
        Ok(Some(fsutil::read_json(&path)?))
    }

    /// Validates `request` against the run's manifest and replaces the stored
    /// selection, bumping the revision. Callers serialize concurrent writers.
    pub fn write_selection(&self, run_id: &str, request: SelectionRequest) -> StoreResult<StoredSelection> {
        let manifest = self.manifest(run_id)?;
        if let Some(other) = request.run_id.as_deref().filter(|r| *r != manifest.run_id) {
            return Err(StoreError::Invalid {
                message: format!("selection names run {other:?}, expected {:?}", manifest.run_id),
                offending_ids: Vec::new(),
            });
        }
        if let Some(c) = request.class_id.filter(|c| *c != manifest.class_id) {
            return Err(StoreError::Invalid {
                message: format!("selection names class {c}, run is for class {}", manifest.class_id),
                offending_ids: Vec::new(),
            });
        }
        let ids: BTreeSet<usize> = manifest.entries.iter().map(|e| e.sample_id).collect();
        match detection::validate_selection(&ids, &request.sample_ids) {
            Ok(()) => {}
            Err(score_core::Error::UnknownIds(bad)) => {
                return Err(StoreError::Invalid {
                    message: format!("sample ids not in run: {bad:?}"),
                    offending_ids: bad,
                })
            }
            Err(score_core::Error::EmptySelection) => {
                return Err(StoreError::Invalid {
                    message: "selection is empty".into(),
                    offending_ids: Vec::new(),
                })
            }
            Err(e) => return Err(e.into()),
        }
        let revision = self.selection(run_id)?.map_or(0, |s| s.revision) + 1;
        let stored = StoredSelection {
            run_id: manifest.run_id,
            class_id: manifest.class_id,
            sample_ids: request.sample_ids,
            source: request.source.unwrap_or(SelectionSource::Human),
            revision,
        };
        fsutil::write_json(&self.run_dir(run_id)?.join(SELECTION_FILE), &stored)?;
        Ok(stored)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_restricted() {
        assert!(valid_name("run-1_a.b"));
        assert!(!valid_name(".."));
        assert!(!valid_name("a/b"));
        assert!(!valid_name(""));
    }

    #[test]
    fn missing_root_lists_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path().join("absent"));
        assert!(store.list_runs().unwrap().is_empty());
        assert!(matches!(store.manifest_bytes("x"), Err(StoreError::NotFound(_))));
    }
}
