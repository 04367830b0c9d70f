//! Property energy audits from photographs using a vision-capable chat model.
//!
//! A property is described by a manifest of image URIs partitioned into four
//! groups (building, heating, windows, lighting). Five observation prompts
//! classify age band, building type, heating hardware, glazing and low-energy
//! lighting; a fixed rule table turns the heating answers into a heating type
//! and energy source; two follow-up prompts estimate annual energy use and
//! suggest improvements. [`evalsuite`] scores the results against a ground
//! truth table.
//!
//! ```no_run
//! # async fn demo() -> Result<(), Box<dyn std::error::Error>> {
//! use facade_audit::{dataset::load_manifest, pipeline::{Pipeline, PipelineConfig}};
//!
//! let manifests = load_manifest("fixtures/manifest.json".as_ref())?;
//! let pipeline = Pipeline::new(PipelineConfig::mock("fixtures/responses"))?;
//! let assessment = pipeline.assess_property(&manifests[0]).await;
//! println!("{:?}", assessment.age_band);
//! # Ok(()) }
//! ```

pub mod dataset;
pub mod evalsuite;
pub mod extract;
pub mod llm;
pub mod pipeline;
pub mod promptkit;
pub mod rulebase;
pub mod types;

pub use dataset::{GroundTruthRecord, PropertyAssessment, PropertyManifest};
pub use evalsuite::{evaluate, EvaluationReport};
pub use pipeline::{Pipeline, PipelineConfig};
pub use promptkit::PromptId;
pub use types::*;
