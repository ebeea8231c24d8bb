use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CacheKey, LlmError, LlmRequest, LlmResponse, Usage};

/// On-disk record: the full request next to the response it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub request: LlmRequest,
    pub text: String,
    pub model: String,
    pub usage: Option<Usage>,
}

/// One JSON file per request at `<dir>/<first two hex digits>/<digest>.json`.
/// Writes go through a temporary file and a rename, so readers never see a
/// partial entry.
#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

impl DiskCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DiskCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        let hex = key.to_hex();
        self.dir.join(&hex[..2]).join(format!("{hex}.json"))
    }

    pub fn load(&self, key: &CacheKey) -> Result<Option<CacheEntry>, LlmError> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(cache_err(&path, e)),
        };
        let entry: CacheEntry = serde_json::from_str(&text).map_err(|e| cache_err(&path, e))?;
        if entry.key != key.to_hex() {
            return Err(cache_err(&path, "entry key does not match its file name"));
        }
        Ok(Some(entry))
    }

    pub fn store(&self, request: &LlmRequest, response: &LlmResponse) -> Result<PathBuf, LlmError> {
        let key = request.cache_key();
        let path = self.path_for(&key);
        let parent = path.parent().expect("cache path has a parent");
        fs::create_dir_all(parent).map_err(|e| cache_err(parent, e))?;
        let entry = CacheEntry {
            key: key.to_hex(),
            request: request.clone(),
            text: response.text.clone(),
            model: response.model.clone(),
            usage: response.usage,
        };
        let mut body = serde_json::to_string_pretty(&entry).map_err(|e| cache_err(&path, e))?;
        body.push('\n');
        let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| cache_err(parent, e))?;
        tmp.write_all(body.as_bytes())
            .map_err(|e| cache_err(&path, e))?;
        tmp.persist(&path).map_err(|e| cache_err(&path, e.error))?;
        Ok(path)
    }
}

fn cache_err(path: &Path, detail: impl ToString) -> LlmError {
    LlmError::Cache {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}
