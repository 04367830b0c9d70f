//! Prompt registry and payload rendering.
//!
//! The seven stage templates (`P1`..`P7`) and the two EPC-experiment
//! templates (`X1`, `X2`) live as plain text files under `prompts/`. They
//! are compiled in, and can be overridden from a directory with the same
//! file layout.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{EnergySource, HeatingType};

/// Placeholder replaced by the stage summary in context-taking prompts.
pub const CONTEXT_PLACEHOLDER: &str = "[P1 to P5 output]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PromptId {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
    P7,
    X1,
    X2,
}

impl PromptId {
    pub const ALL: [PromptId; 9] = [
        PromptId::P1,
        PromptId::P2,
        PromptId::P3,
        PromptId::P4,
        PromptId::P5,
        PromptId::P6,
        PromptId::P7,
        PromptId::X1,
        PromptId::X2,
    ];

    /// The five observation stages whose outputs feed the summary.
    pub const OBSERVATION_STAGES: [PromptId; 5] =
        [PromptId::P1, PromptId::P2, PromptId::P3, PromptId::P4, PromptId::P5];

    /// The seven stages of a full property assessment.
    pub const ASSESSMENT_STAGES: [PromptId; 7] = [
        PromptId::P1,
        PromptId::P2,
        PromptId::P3,
        PromptId::P4,
        PromptId::P5,
        PromptId::P6,
        PromptId::P7,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptId::P1 => "P1",
            PromptId::P2 => "P2",
            PromptId::P3 => "P3",
            PromptId::P4 => "P4",
            PromptId::P5 => "P5",
            PromptId::P6 => "P6",
            PromptId::P7 => "P7",
            PromptId::X1 => "X1",
            PromptId::X2 => "X2",
        }
    }

    /// Human-readable stage name, used as the header in stage summaries.
    pub fn stage_name(self) -> &'static str {
        match self {
            PromptId::P1 => "Building age",
            PromptId::P2 => "Building type",
            PromptId::P3 => "Heating systems",
            PromptId::P4 => "Window type",
            PromptId::P5 => "Lighting",
            PromptId::P6 => "Energy consumption",
            PromptId::P7 => "Recommendation",
            PromptId::X1 => "EPC rating from text",
            PromptId::X2 => "EPC rating from images",
        }
    }

    /// Whether the prompt takes the stage summary as context.
    pub fn takes_context(self) -> bool {
        matches!(self, PromptId::P6 | PromptId::P7 | PromptId::X1)
    }

    /// Whether the prompt is sent without images.
    pub fn text_only(self) -> bool {
        self == PromptId::X1
    }

    /// `X1`/`X2` are authored for this tool; the other templates are transcribed verbatim.
    pub fn is_verbatim(self) -> bool {
        !matches!(self, PromptId::X1 | PromptId::X2)
    }

    fn builtin_template(self) -> &'static str {
        match self {
            PromptId::P1 => include_str!("../prompts/P1.txt"),
            PromptId::P2 => include_str!("../prompts/P2.txt"),
            PromptId::P3 => include_str!("../prompts/P3.txt"),
            PromptId::P4 => include_str!("../prompts/P4.txt"),
            PromptId::P5 => include_str!("../prompts/P5.txt"),
            PromptId::P6 => include_str!("../prompts/P6.txt"),
            PromptId::P7 => include_str!("../prompts/P7.txt"),
            PromptId::X1 => include_str!("../prompts/X1.txt"),
            PromptId::X2 => include_str!("../prompts/X2.txt"),
        }
    }
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptId {
    type Err = PromptError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptId::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| PromptError::UnknownPrompt(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown prompt id {0:?}")]
    UnknownPrompt(String),
    #[error("prompt {0} requires a context block")]
    MissingContext(PromptId),
    #[error("prompt {0} does not accept a context block")]
    UnexpectedContext(PromptId),
    #[error("prompt {0} requires at least one image")]
    NoImages(PromptId),
    #[error("prompt {0} is text-only and does not accept images")]
    UnexpectedImages(PromptId),
    #[error("stage summary is missing output for {0:?}")]
    IncompleteStages(Vec<PromptId>),
    #[error("template {id} is invalid: {reason}")]
    InvalidTemplate { id: PromptId, reason: String },
    #[error("failed to read template {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A reference to one image sent with a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRef {
    /// `http(s)` or `data:` URI, passed to the provider as-is.
    Url(String),
    /// Local file, inline-encoded as a base64 data URI before sending.
    File(PathBuf),
}

impl ImageRef {
    /// Classify a manifest image string. Relative file paths are resolved against `base_dir`.
    pub fn from_manifest(uri: &str, base_dir: Option<&Path>) -> Self {
        let lower = uri.to_ascii_lowercase();
        if lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("data:") {
            return ImageRef::Url(uri.to_string());
        }
        let path = uri.strip_prefix("file://").unwrap_or(uri);
        let path = Path::new(path);
        match base_dir {
            Some(base) if path.is_relative() => ImageRef::File(base.join(path)),
            _ => ImageRef::File(path.to_path_buf()),
        }
    }

    /// Stable textual form, used for cache keys.
    pub fn key(&self) -> String {
        match self {
            ImageRef::Url(u) => u.clone(),
            ImageRef::File(p) => format!("file://{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPayload {
    pub prompt_id: PromptId,
    pub text: String,
    pub images: Vec<ImageRef>,
}

#[derive(Debug, Clone)]
pub struct PromptRegistry {
    templates: BTreeMap<PromptId, String>,
}

impl Default for PromptRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptRegistry {
    pub fn builtin() -> Self {
        let templates = PromptId::ALL
            .into_iter()
            .map(|id| (id, id.builtin_template().to_string()))
            .collect();
        Self { templates }
    }

    /// Load templates from `<dir>/<id>.txt`; ids without a file keep the built-in text.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut registry = Self::builtin();
        for id in PromptId::ALL {
            let path = dir.join(format!("{id}.txt"));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.clone(),
                source,
            })?;
            validate_template(id, &text)?;
            registry.templates.insert(id, text);
        }
        Ok(registry)
    }

    pub fn template(&self, id: PromptId) -> &str {
        &self.templates[&id]
    }

    pub fn render(
        &self,
        prompt_id: PromptId,
        images: Vec<ImageRef>,
        context: Option<&str>,
    ) -> Result<PromptPayload, PromptError> {
        let template = self.template(prompt_id);
        let text = match (prompt_id.takes_context(), context) {
            (true, Some(ctx)) => template.replacen(CONTEXT_PLACEHOLDER, ctx, 1),
            (true, None) => return Err(PromptError::MissingContext(prompt_id)),
            (false, Some(_)) => return Err(PromptError::UnexpectedContext(prompt_id)),
            (false, None) => template.to_string(),
        };
        match (prompt_id.text_only(), images.is_empty()) {
            (true, false) => return Err(PromptError::UnexpectedImages(prompt_id)),
            (false, true) => return Err(PromptError::NoImages(prompt_id)),
            _ => {}
        }
        Ok(PromptPayload { prompt_id, text, images })
    }
}

fn validate_template(id: PromptId, text: &str) -> Result<(), PromptError> {
    if text.trim().is_empty() {
        return Err(PromptError::InvalidTemplate {
            id,
            reason: "empty template".into(),
        });
    }
    let placeholders = text.matches(CONTEXT_PLACEHOLDER).count();
    match (id.takes_context(), placeholders) {
        (true, 1) | (false, 0) => Ok(()),
        (true, n) => Err(PromptError::InvalidTemplate {
            id,
            reason: format!("expected exactly one {CONTEXT_PLACEHOLDER} placeholder, found {n}"),
        }),
        (false, _) => Err(PromptError::InvalidTemplate {
            id,
            reason: format!("template must not contain {CONTEXT_PLACEHOLDER}"),
        }),
    }
}

/// Labelled concatenation of the five observation outputs plus the rule-base result.
pub fn stage_summary(
    raw: &BTreeMap<PromptId, String>,
    heating: HeatingType,
    source: EnergySource,
) -> Result<String, PromptError> {
    let missing: Vec<PromptId> = PromptId::OBSERVATION_STAGES
        .into_iter()
        .filter(|id| !raw.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(PromptError::IncompleteStages(missing));
    }
    let mut blocks: Vec<String> = PromptId::OBSERVATION_STAGES
        .into_iter()
        .map(|id| format!("### {}\n{}", id.stage_name(), raw[&id]))
        .collect();
    blocks.push(format!(
        "### Derived heating\nMain heating: {heating}; Energy source: {source}"
    ));
    Ok(blocks.join("\n\n"))
}
