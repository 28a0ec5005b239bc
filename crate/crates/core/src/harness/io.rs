//! Tagged JSON files: a `MAGIC version` header line, then the document.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::datagen::SequenceDataset;
use crate::error::{PvrnnError, Result};

pub const DATASET_MAGIC: &str = "PVRNN-DATASET";
pub const DATASET_VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> PvrnnError {
    PvrnnError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn write_tagged<T: Serialize>(path: &Path, magic: &str, version: u32, value: &T) -> Result<()> {
    let body = serde_json::to_string(value).map_err(|e| PvrnnError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    write_text(path, &format!("{magic} {version}\n{body}\n"))
}

pub fn read_tagged<T: DeserializeOwned>(path: &Path, magic: &str, version: u32) -> Result<T> {
    let text = read_text(path)?;
    let (header, body) = text.split_once('\n').ok_or_else(|| PvrnnError::Format {
        path: path.to_path_buf(),
        reason: "missing header line".into(),
    })?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(magic) {
        return Err(PvrnnError::Format {
            path: path.to_path_buf(),
            reason: format!("expected header {magic}"),
        });
    }
    let found = parts.next().unwrap_or("").to_string();
    if found != version.to_string() {
        return Err(PvrnnError::VersionMismatch {
            path: path.to_path_buf(),
            expected: version.to_string(),
            found,
        });
    }
    serde_json::from_str(body).map_err(|e| PvrnnError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn save_dataset(path: &Path, dataset: &SequenceDataset) -> Result<()> {
    write_tagged(path, DATASET_MAGIC, DATASET_VERSION, dataset)
}

pub fn load_dataset(path: &Path) -> Result<SequenceDataset> {
    read_tagged(path, DATASET_MAGIC, DATASET_VERSION)
}
