use std::path::{Path, PathBuf};

use async_trait::async_trait;

use super::{CompletionBackend, CompletionResult, LlmError};
use crate::promptkit::PromptPayload;

/// Replays `<fixtures_dir>/<property_id>/<prompt_id>.txt` verbatim.
#[derive(Debug, Clone)]
pub struct FixturePlayback {
    dir: PathBuf,
}

impl FixturePlayback {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

pub fn mock_complete(
    payload: &PromptPayload,
    property_id: &str,
    fixtures_dir: &Path,
) -> Result<CompletionResult, LlmError> {
    let path = fixtures_dir
        .join(property_id)
        .join(format!("{}.txt", payload.prompt_id));
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(LlmError::FixtureMissing(path))
        }
        Err(e) => return Err(LlmError::Cache(e)),
    };
    if text.trim().is_empty() {
        return Err(LlmError::MalformedResponse(format!(
            "fixture {} is empty",
            path.display()
        )));
    }
    Ok(CompletionResult {
        text,
        prompt_id: payload.prompt_id,
        property_id: property_id.to_string(),
        token_usage: None,
        from_cache: true,
    })
}

#[async_trait]
impl CompletionBackend for FixturePlayback {
    async fn complete(
        &self,
        payload: &PromptPayload,
        property_id: &str,
    ) -> Result<CompletionResult, LlmError> {
        mock_complete(payload, property_id, &self.dir)
    }

    fn is_mock(&self) -> bool {
        true
    }
}
