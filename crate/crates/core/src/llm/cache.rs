//! On-disk response cache.
//!
//! Layout: `<cache_dir>/<property_id>/<prompt_id>.<payload-hash>.txt` holds the
//! response text; a sibling `.request.json` records the request that produced it.
//! Every write goes through a temp file in the same directory and a rename.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::promptkit::{PromptId, PromptPayload};

#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedRequest {
    pub property_id: String,
    pub prompt_id: PromptId,
    pub text: String,
    pub images: Vec<String>,
}

/// First 16 hex chars of SHA-256 over the prompt text and image keys.
pub fn payload_hash(payload: &PromptPayload) -> String {
    let mut hasher = Sha256::new();
    hasher.update(payload.text.as_bytes());
    for image in &payload.images {
        hasher.update(b"\n");
        hasher.update(image.key().as_bytes());
    }
    hex::encode(hasher.finalize())[..16].to_string()
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn file(&self, property_id: &str, payload: &PromptPayload, suffix: &str) -> PathBuf {
        self.root
            .join(property_id)
            .join(format!("{}.{}{suffix}", payload.prompt_id, payload_hash(payload)))
    }

    pub fn response_path(&self, property_id: &str, payload: &PromptPayload) -> PathBuf {
        self.file(property_id, payload, ".txt")
    }

    pub fn request_path(&self, property_id: &str, payload: &PromptPayload) -> PathBuf {
        self.file(property_id, payload, ".request.json")
    }

    pub fn get(&self, property_id: &str, payload: &PromptPayload) -> std::io::Result<Option<String>> {
        match std::fs::read_to_string(self.response_path(property_id, payload)) {
            Ok(text) if !text.is_empty() => Ok(Some(text)),
            Ok(_) => Ok(None),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, property_id: &str, payload: &PromptPayload, response: &str) -> std::io::Result<()> {
        let request = CachedRequest {
            property_id: property_id.to_string(),
            prompt_id: payload.prompt_id,
            text: payload.text.clone(),
            images: payload.images.iter().map(|i| i.key()).collect(),
        };
        let request_json = serde_json::to_vec_pretty(&request).map_err(std::io::Error::other)?;
        write_atomic(&self.request_path(property_id, payload), &request_json)?;
        write_atomic(&self.response_path(property_id, payload), response.as_bytes())
    }

    /// All cached requests recorded for one property.
    pub fn requests_for(&self, property_id: &str) -> std::io::Result<Vec<CachedRequest>> {
        let dir = self.root.join(property_id);
        let mut out = Vec::new();
        let entries = match std::fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(e),
        };
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".request.json"))
            .collect();
        paths.sort();
        for path in paths {
            let bytes = std::fs::read(&path)?;
            out.push(serde_json::from_slice(&bytes).map_err(std::io::Error::other)?);
        }
        Ok(out)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
