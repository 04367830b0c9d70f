//! Per-property orchestration and batch runs.
//!
//! The five observation stages run concurrently on their image groups. The
//! rule base then derives heating type and energy source, and the two
//! assessment stages run on the building images with a summary of the
//! observation outputs substituted into their templates.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Utc;
use futures::future::join_all;
use futures::stream::{self, StreamExt};
use thiserror::Error;
use tracing::{info, warn};

use crate::dataset::{
    read_assessments, AssessmentWriter, DatasetError, GroundTruthRecord, ImageGroup, PropertyAssessment,
    PropertyManifest, StageError, StageFailure,
};
use crate::evalsuite::{evaluate, EvalError, EvalOptions, EvaluationReport};
use crate::extract::{
    parse_age_band, parse_building_type, parse_energy_estimate, parse_heating_observation, parse_lighting,
    parse_window_type,
};
use crate::llm::{CompletionResult, FixturePlayback, LlmClient, LlmConfig, LlmError, OpenAiClient, ResponseCache};
use crate::promptkit::{stage_summary, PromptError, PromptId, PromptRegistry};
use crate::rulebase::infer_heating;

pub const DEFAULT_CACHE_DIR: &str = ".facade-audit-cache";

/// Stages that consume the observation summary.
const CONTEXT_STAGES: [PromptId; 2] = [PromptId::P6, PromptId::P7];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub llm: LlmConfig,
    /// Replay fixture responses from this directory instead of calling a provider.
    pub fixtures_dir: Option<PathBuf>,
    /// `None` disables the response cache.
    pub cache_dir: Option<PathBuf>,
    /// Override templates from `<dir>/<id>.txt`.
    pub prompts_dir: Option<PathBuf>,
    pub parallel_properties: usize,
    pub stages: BTreeSet<PromptId>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            llm: LlmConfig::default(),
            fixtures_dir: None,
            cache_dir: Some(PathBuf::from(DEFAULT_CACHE_DIR)),
            prompts_dir: None,
            parallel_properties: 4,
            stages: PromptId::ASSESSMENT_STAGES.into_iter().collect(),
        }
    }
}

impl PipelineConfig {
    /// Fixture playback with no response cache.
    pub fn mock(fixtures_dir: impl Into<PathBuf>) -> Self {
        Self {
            fixtures_dir: Some(fixtures_dir.into()),
            cache_dir: None,
            ..Self::default()
        }
    }
}

fn group_for(id: PromptId) -> ImageGroup {
    match id {
        PromptId::P3 => ImageGroup::Heating,
        PromptId::P4 => ImageGroup::Windows,
        PromptId::P5 => ImageGroup::Lighting,
        _ => ImageGroup::Building,
    }
}

fn llm_failure(prompt_id: PromptId, e: &LlmError) -> StageFailure {
    StageFailure {
        prompt_id,
        error: StageError::Llm {
            kind: e.kind(),
            message: e.to_string(),
        },
    }
}

pub struct Pipeline {
    client: Arc<LlmClient>,
    registry: PromptRegistry,
    config: PipelineConfig,
}

impl Pipeline {
    /// Live mode needs an API key and fails with an auth error before any request is made.
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        let backend: Arc<dyn crate::llm::CompletionBackend> = match &config.fixtures_dir {
            Some(dir) => Arc::new(FixturePlayback::new(dir.clone())),
            None => Arc::new(OpenAiClient::new(&config.llm)?),
        };
        let cache = config.cache_dir.as_ref().map(ResponseCache::new);
        let client = Arc::new(LlmClient::new(backend, cache, config.llm.max_inflight));
        Self::with_client(config, client)
    }

    pub fn with_client(config: PipelineConfig, client: Arc<LlmClient>) -> Result<Self, PipelineError> {
        if config.stages.is_empty() {
            return Err(PipelineError::Config("no stages selected".into()));
        }
        if let Some(bad) = config.stages.iter().find(|s| !s.is_verbatim()) {
            return Err(PipelineError::Config(format!(
                "{bad} is an experiment prompt, not a pipeline stage"
            )));
        }
        let registry = match &config.prompts_dir {
            Some(dir) => PromptRegistry::from_dir(dir)?,
            None => PromptRegistry::builtin(),
        };
        Ok(Self {
            client,
            registry,
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }

    pub fn registry(&self) -> &PromptRegistry {
        &self.registry
    }

    /// Render one prompt against the property's image group and send it.
    pub async fn run_prompt(
        &self,
        manifest: &PropertyManifest,
        prompt_id: PromptId,
        context: Option<&str>,
    ) -> Result<CompletionResult, StageFailure> {
        let images = if prompt_id.text_only() {
            Vec::new()
        } else {
            manifest.group_images(group_for(prompt_id))
        };
        let payload = self
            .registry
            .render(prompt_id, images, context)
            .map_err(|e| StageFailure {
                prompt_id,
                error: StageError::Prompt { message: e.to_string() },
            })?;
        self.client
            .complete(&payload, &manifest.property_id)
            .await
            .map_err(|e| llm_failure(prompt_id, &e))
    }

    /// Run the selected observation stages and the rule base.
    async fn observe(&self, manifest: &PropertyManifest, assessment: &mut PropertyAssessment) {
        let stages: Vec<PromptId> = PromptId::OBSERVATION_STAGES
            .into_iter()
            .filter(|s| self.config.stages.contains(s))
            .collect();
        let results = join_all(stages.iter().map(|&s| self.run_prompt(manifest, s, None))).await;

        for (stage, result) in stages.into_iter().zip(results) {
            let text = match result {
                Ok(r) => r.text,
                Err(failure) => {
                    warn!(property = %manifest.property_id, %stage, error = ?failure.error, "stage failed");
                    assessment.failures.push(failure);
                    continue;
                }
            };
            let diag = match stage {
                PromptId::P1 => parse_age_band(&text).map(|v| assessment.age_band = Some(v)),
                PromptId::P2 => parse_building_type(&text).map(|v| assessment.building_type = Some(v)),
                PromptId::P3 => parse_heating_observation(&text).map(|v| assessment.heating_observation = Some(v)),
                PromptId::P4 => parse_window_type(&text).map(|v| assessment.window_type = Some(v)),
                PromptId::P5 => parse_lighting(&text).map(|v| assessment.lighting = Some(v)),
                _ => unreachable!("only observation stages reach here"),
            }
            .err();
            if let Some(mut d) = diag {
                d.prompt_id = stage;
                assessment.diagnostics.push(d);
            }
            assessment.raw.insert(stage, text);
        }

        if let (Some(band), Some(building), Some(obs)) =
            (assessment.age_band, assessment.building_type, assessment.heating_observation)
        {
            let (heating, source) = infer_heating(band, building, obs);
            assessment.heating_type = Some(heating);
            assessment.energy_source = Some(source);
        }
    }

    fn unparsed_observations(assessment: &PropertyAssessment) -> Vec<PromptId> {
        let parsed = [
            assessment.age_band.is_some(),
            assessment.building_type.is_some(),
            assessment.heating_observation.is_some(),
            assessment.window_type.is_some(),
            assessment.lighting.is_some(),
        ];
        PromptId::OBSERVATION_STAGES
            .into_iter()
            .zip(parsed)
            .filter(|(_, ok)| !ok)
            .map(|(id, _)| id)
            .collect()
    }

    fn summary_for(assessment: &PropertyAssessment) -> Result<String, Vec<PromptId>> {
        let missing = Self::unparsed_observations(assessment);
        if !missing.is_empty() {
            return Err(missing);
        }
        let (heating, source) = (
            assessment.heating_type.expect("derived once P1-P3 parsed"),
            assessment.energy_source.expect("derived once P1-P3 parsed"),
        );
        stage_summary(&assessment.raw, heating, source).map_err(|e| match e {
            PromptError::IncompleteStages(m) => m,
            _ => unreachable!("stage_summary only reports missing stages"),
        })
    }

    /// Observation stages and rule base only, rendered as the context summary.
    pub async fn observation_summary(&self, manifest: &PropertyManifest) -> Result<String, String> {
        let mut assessment = PropertyAssessment::new(&manifest.property_id, &self.config.llm.model_name);
        let all = PromptId::OBSERVATION_STAGES.into_iter().all(|s| self.config.stages.contains(&s));
        if !all {
            return Err("observation stages P1-P5 must all be enabled".into());
        }
        self.observe(manifest, &mut assessment).await;
        Self::summary_for(&assessment).map_err(|missing| {
            let names: Vec<&str> = missing.iter().map(|m| m.as_str()).collect();
            format!("observation stages without a parsed answer: {}", names.join(", "))
        })
    }

    /// Every stage failure is recorded on the assessment; nothing here aborts the property.
    pub async fn assess_property(&self, manifest: &PropertyManifest) -> PropertyAssessment {
        let mut assessment = PropertyAssessment::new(&manifest.property_id, &self.config.llm.model_name);
        self.observe(manifest, &mut assessment).await;

        let assess: Vec<PromptId> = CONTEXT_STAGES
            .into_iter()
            .filter(|s| self.config.stages.contains(s))
            .collect();
        if !assess.is_empty() {
            match Self::summary_for(&assessment) {
                Err(missing) => {
                    for stage in assess {
                        assessment.failures.push(StageFailure {
                            prompt_id: stage,
                            error: StageError::ContextUnavailable {
                                missing: missing.clone(),
                            },
                        });
                    }
                }
                Ok(summary) => {
                    let results =
                        join_all(assess.iter().map(|&s| self.run_prompt(manifest, s, Some(&summary)))).await;
                    for (stage, result) in assess.into_iter().zip(results) {
                        let text = match result {
                            Ok(r) => r.text,
                            Err(failure) => {
                                assessment.failures.push(failure);
                                continue;
                            }
                        };
                        if stage == PromptId::P6 {
                            match parse_energy_estimate(&text) {
                                Ok(e) => assessment.energy_estimate = Some(e),
                                Err(d) => assessment.diagnostics.push(d),
                            }
                        } else {
                            assessment.recommendation_text = Some(text.clone());
                        }
                        assessment.raw.insert(stage, text);
                    }
                }
            }
        }
        assessment.finished_at = Utc::now();
        assessment
    }

    /// Assess each property in manifest order, appending to `output` as results arrive.
    ///
    /// With `resume`, properties already present in `output` are skipped and
    /// the file is appended to; otherwise it is truncated first. Properties where
    /// no stage produced text are not written and are reported in `failed`.
    pub async fn run_batch(
        &self,
        manifests: &[PropertyManifest],
        ground_truth: Option<&[GroundTruthRecord]>,
        output: &Path,
        resume: bool,
        mut progress: impl FnMut(BatchEvent<'_>),
    ) -> Result<BatchOutcome, PipelineError> {
        let calls_before = self.client.backend_calls();
        let existing = if resume && output.exists() {
            read_assessments(output)?
        } else {
            Vec::new()
        };
        let done: HashSet<&str> = existing.iter().map(|a| a.property_id.as_str()).collect();
        let (skip, todo): (Vec<&PropertyManifest>, Vec<&PropertyManifest>) =
            manifests.iter().partition(|m| done.contains(m.property_id.as_str()));
        let skipped: Vec<String> = skip.iter().map(|m| m.property_id.clone()).collect();
        for id in &skipped {
            progress(BatchEvent::Skipped(id));
        }

        let mut writer = if resume {
            AssessmentWriter::append_to(output)?
        } else {
            AssessmentWriter::create(output)?
        };
        let mut assessments = existing.clone();
        let mut failed = Vec::new();
        let mut results = stream::iter(todo)
            .map(|m| self.assess_property(m))
            .buffered(self.config.parallel_properties.max(1));
        while let Some(a) = results.next().await {
            if a.wholly_failed() {
                let reason = a
                    .failures
                    .first()
                    .map(|f| format!("{}: {:?}", f.prompt_id, f.error))
                    .unwrap_or_default();
                progress(BatchEvent::Failed(&a.property_id, &reason));
                failed.push((a.property_id.clone(), reason));
                continue;
            }
            writer.append(&a)?;
            progress(BatchEvent::Assessed(&a));
            assessments.push(a);
        }
        info!(
            assessed = assessments.len() - existing.len(),
            skipped = skipped.len(),
            failed = failed.len(),
            "batch finished"
        );

        let evaluation = ground_truth.map(|gt| evaluate(&assessments, gt, &EvalOptions::default()));
        Ok(BatchOutcome {
            assessments,
            skipped,
            failed,
            backend_calls: self.client.backend_calls() - calls_before,
            evaluation,
        })
    }
}

#[derive(Debug)]
pub enum BatchEvent<'a> {
    Skipped(&'a str),
    Assessed(&'a PropertyAssessment),
    Failed(&'a str, &'a str),
}

#[derive(Debug)]
pub struct BatchOutcome {
    /// Assessments now in the output file, resumed ones first.
    pub assessments: Vec<PropertyAssessment>,
    pub skipped: Vec<String>,
    /// (property id, first failure) for properties with no usable output.
    pub failed: Vec<(String, String)>,
    pub backend_calls: usize,
    pub evaluation: Option<Result<EvaluationReport, EvalError>>,
}

impl BatchOutcome {
    /// Any property failed outright or carries a stage failure or diagnostic.
    pub fn is_partial(&self) -> bool {
        !self.failed.is_empty() || self.assessments.iter().any(|a| a.has_problems())
    }
}
