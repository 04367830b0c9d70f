//! `facade-audit` command-line tool.
//!
//! Exit codes: 0 success, 1 partial failure, 2 usage/configuration/auth
//! error, 3 I/O, schema or join error.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use facade_audit::dataset::{
    load_ground_truth, load_manifest, read_assessments, AssessmentWriter, DatasetError, PropertyAssessment,
    PropertyManifest,
};
use facade_audit::evalsuite::{epc_direct_experiment, evaluate, AgeMetric, EpcMode, EvalError, EvalOptions};
use facade_audit::llm::{api_key_from_env, LlmConfig, LlmError, DEFAULT_BASE_URL, DEFAULT_MODEL};
use facade_audit::pipeline::{BatchEvent, Pipeline, PipelineConfig, PipelineError, DEFAULT_CACHE_DIR};
use facade_audit::promptkit::{PromptError, PromptId, PromptRegistry};

const EXIT_PARTIAL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "facade-audit", version, about = "Energy audits of properties from photographs")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalOpts {
    /// Chat model name sent to the provider.
    #[arg(long, global = true, default_value = DEFAULT_MODEL)]
    model: String,
    /// Base URL of an OpenAI-compatible API.
    #[arg(long, global = true, default_value = DEFAULT_BASE_URL)]
    base_url: String,
    /// Response cache directory.
    #[arg(long, global = true, default_value = DEFAULT_CACHE_DIR)]
    cache_dir: PathBuf,
    /// Do not read or write the response cache.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Sampling temperature; provider default when omitted.
    #[arg(long, global = true)]
    temperature: Option<f64>,
    #[arg(long, global = true, default_value_t = 3)]
    max_retries: u32,
    /// Per-request timeout in seconds.
    #[arg(long, global = true, default_value_t = 120)]
    timeout: u64,
    /// Maximum concurrent provider requests.
    #[arg(long, global = true, default_value_t = 4)]
    max_inflight: usize,
    /// Directory of template overrides named `<id>.txt`.
    #[arg(long, global = true)]
    prompts_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Assess a single property and print its summary and recommendations.
    Assess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        property: String,
        /// Replay responses from `<dir>/<property>/<prompt>.txt` instead of calling a provider.
        #[arg(long)]
        mock: Option<PathBuf>,
        /// Write the assessment record (one JSON line) here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<PromptId>>,
    },
    /// Assess every property in a manifest, appending JSON Lines to --out.
    Batch {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        mock: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Skip properties already present in --out.
        #[arg(long)]
        resume: bool,
        #[arg(long, default_value_t = 4)]
        parallel: usize,
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<PromptId>>,
        /// Ground truth CSV; prints an evaluation report when given.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Score assessments against ground truth.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum, default_value_t = AgeMetricArg::Band)]
        age_metric: AgeMetricArg,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Row label in the report.
        #[arg(long, default_value = "AI")]
        label: String,
    },
    /// Inspect prompt templates.
    Prompts {
        #[command(subcommand)]
        action: PromptsAction,
    },
    /// Ask for the EPC rating directly, from the stage summary or the building images.
    EpcExperiment {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        mock: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        parallel: usize,
    },
}

#[derive(Subcommand, Debug)]
enum PromptsAction {
    /// Print a stored template.
    Show { id: String },
    /// List template ids.
    List,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AgeMetricArg {
    Band,
    Midpoint,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Text,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Text,
    Images,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_USAGE,
            error: error.into(),
        }
    }
    fn io(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_IO,
            error: error.into(),
        }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Failure::io(e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::io(e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Dataset(_) | PipelineError::Prompt(PromptError::Io { .. }) => EXIT_IO,
            PipelineError::Llm(LlmError::Cache(_) | LlmError::Image { .. }) => EXIT_IO,
            _ => EXIT_USAGE,
        };
        Failure { code, error: e.into() }
    }
}

type CmdResult = Result<u8, Failure>;

fn llm_config(g: &GlobalOpts) -> Result<LlmConfig, Failure> {
    let base_url = url::Url::parse(&g.base_url).map_err(|e| Failure::usage(anyhow!("--base-url {}: {e}", g.base_url)))?;
    if let Some(t) = g.temperature {
        if !(0.0..=2.0).contains(&t) {
            return Err(Failure::usage(anyhow!("--temperature must be between 0 and 2")));
        }
    }
    Ok(LlmConfig {
        base_url,
        model_name: g.model.clone(),
        api_key: api_key_from_env(),
        temperature: g.temperature,
        max_retries: g.max_retries,
        timeout: Duration::from_secs(g.timeout),
        max_inflight: g.max_inflight.max(1),
        ..LlmConfig::default()
    })
}

fn pipeline(
    g: &GlobalOpts,
    mock: Option<&PathBuf>,
    parallel: usize,
    stages: Option<&Vec<PromptId>>,
) -> Result<Pipeline, Failure> {
    if let Some(dir) = mock {
        if !dir.is_dir() {
            return Err(Failure::io(anyhow!("fixtures directory {} not found", dir.display())));
        }
    }
    let mut config = PipelineConfig {
        llm: llm_config(g)?,
        fixtures_dir: mock.cloned(),
        cache_dir: (!g.no_cache).then(|| g.cache_dir.clone()),
        prompts_dir: g.prompts_dir.clone(),
        parallel_properties: parallel.max(1),
        ..PipelineConfig::default()
    };
    if let Some(stages) = stages {
        config.stages = stages.iter().copied().collect::<BTreeSet<_>>();
    }
    Ok(Pipeline::new(config)?)
}

fn summarize(a: &PropertyAssessment) -> String {
    fn show<T: std::fmt::Debug>(v: Option<T>) -> String {
        v.map(|v| format!("{v:?}")).unwrap_or_else(|| "-".into())
    }
    let mut s = String::new();
    let _ = writeln!(s, "property:      {}", a.property_id);
    let _ = writeln!(s, "age band:      {}", show(a.age_band));
    let _ = writeln!(s, "building type: {}", show(a.building_type));
    let _ = writeln!(s, "heating type:  {}", show(a.heating_type));
    let _ = writeln!(s, "energy source: {}", show(a.energy_source));
    let _ = writeln!(
        s,
        "window:        {}",
        a.window_type.map(|w| format!("{} ({})", w as u8, w.label())).unwrap_or_else(|| "-".into())
    );
    let _ = writeln!(s, "lighting:      {}", a.lighting.map(|l| l.get().to_string()).unwrap_or_else(|| "-".into()));
    let energy = a.energy_estimate.map(|e| {
        if e.low_kwh_m2() == e.high_kwh_m2() {
            format!("{} kWh/m²", e.point_kwh_m2())
        } else {
            format!("{} kWh/m² ({} to {})", e.point_kwh_m2(), e.low_kwh_m2(), e.high_kwh_m2())
        }
    });
    let _ = writeln!(s, "energy:        {}", energy.unwrap_or_else(|| "-".into()));
    for d in &a.diagnostics {
        let _ = writeln!(s, "diagnostic:    {d}");
    }
    for f in &a.failures {
        let _ = writeln!(s, "failure:       {}: {:?}", f.prompt_id, f.error);
    }
    s
}

fn find_property(manifests: Vec<PropertyManifest>, id: &str) -> Result<PropertyManifest, Failure> {
    manifests
        .into_iter()
        .find(|m| m.property_id == id)
        .ok_or_else(|| Failure::usage(anyhow!("property {id:?} is not in the manifest")))
}

async fn cmd_assess(
    g: &GlobalOpts,
    manifest: &Path,
    property: &str,
    mock: Option<&PathBuf>,
    out: Option<&Path>,
    stages: Option<&Vec<PromptId>>,
) -> CmdResult {
    let manifest = find_property(load_manifest(manifest)?, property)?;
    let pipeline = pipeline(g, mock, 1, stages)?;
    let assessment = pipeline.assess_property(&manifest).await;
    print!("{}", summarize(&assessment));
    if let Some(text) = &assessment.recommendation_text {
        println!("\nrecommendations:\n{text}");
    }
    if let Some(out) = out {
        AssessmentWriter::create(out)?.append(&assessment)?;
    }
    Ok(if assessment.has_problems() { EXIT_PARTIAL } else { 0 })
}

#[allow(clippy::too_many_arguments)]
async fn cmd_batch(
    g: &GlobalOpts,
    manifest: &Path,
    mock: Option<&PathBuf>,
    out: &Path,
    resume: bool,
    parallel: usize,
    stages: Option<&Vec<PromptId>>,
    truth: Option<&Path>,
) -> CmdResult {
    let manifests = load_manifest(manifest)?;
    let truth = truth.map(load_ground_truth).transpose()?;
    let pipeline = pipeline(g, mock, parallel, stages)?;
    let total = manifests.len();
    let mut seen = 0usize;
    let outcome = pipeline
        .run_batch(&manifests, truth.as_deref(), out, resume, |event| {
            seen += 1;
            match event {
                BatchEvent::Skipped(id) => eprintln!("[{seen}/{total}] {id} skipped (cached)"),
                BatchEvent::Assessed(a) if a.has_problems() => eprintln!(
                    "[{seen}/{total}] {} done with {} diagnostic(s), {} failure(s)",
                    a.property_id,
                    a.diagnostics.len(),
                    a.failures.len()
                ),
                BatchEvent::Assessed(a) => eprintln!("[{seen}/{total}] {} done", a.property_id),
                BatchEvent::Failed(id, why) => eprintln!("[{seen}/{total}] {id} FAILED: {why}"),
            }
        })
        .await?;
    println!(
        "{} assessed, {} skipped (cached), {} failed, {} LLM call(s)",
        outcome.assessments.len() - outcome.skipped.len(),
        outcome.skipped.len(),
        outcome.failed.len(),
        outcome.backend_calls
    );
    for (id, why) in &outcome.failed {
        println!("failed: {id}: {why}");
    }
    match outcome.evaluation {
        Some(Ok(report)) => print!("\n{}", report.render_text()),
        Some(Err(e)) => eprintln!("evaluation skipped: {e}"),
        None => {}
    }
    Ok(if outcome.failed.is_empty() { 0 } else { EXIT_PARTIAL })
}

fn cmd_evaluate(
    predictions: &Path,
    truth: &Path,
    age_metric: AgeMetricArg,
    format: Format,
    out: Option<&Path>,
    label: &str,
) -> CmdResult {
    let assessments = read_assessments(predictions)?;
    let truth = load_ground_truth(truth)?;
    let options = EvalOptions {
        age_metric: match age_metric {
            AgeMetricArg::Band => AgeMetric::Band,
            AgeMetricArg::Midpoint => AgeMetric::Midpoint,
        },
        label: label.to_string(),
    };
    let report = evaluate(&assessments, &truth, &options)?;
    let rendered = match format {
        Format::Text => report.render_text(),
        Format::Csv => report.render_csv(),
    };
    match out {
        Some(path) => std::fs::write(path, rendered).map_err(|e| Failure::io(anyhow!("{}: {e}", path.display())))?,
        None => print!("{rendered}"),
    }
    Ok(0)
}

fn cmd_prompts(g: &GlobalOpts, action: &PromptsAction) -> CmdResult {
    let registry = match &g.prompts_dir {
        Some(dir) => PromptRegistry::from_dir(dir).map_err(|e| Failure::from(PipelineError::Prompt(e)))?,
        None => PromptRegistry::builtin(),
    };
    let mut text = String::new();
    match action {
        PromptsAction::Show { id } => {
            let id: PromptId = id.parse().map_err(Failure::usage)?;
            if !id.is_verbatim() {
                let _ = writeln!(text, "=== NON-VERBATIM: authored experiment prompt {id} ===");
            }
            let _ = writeln!(text, "{}", registry.template(id));
        }
        PromptsAction::List => {
            for id in PromptId::ALL {
                let tag = if id.is_verbatim() { "" } else { " (non-verbatim)" };
                let _ = writeln!(text, "{id}  {}{tag}", id.stage_name());
            }
        }
    }
    // a closed pipe (e.g. `| head`) is not an error worth reporting
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    Ok(0)
}

async fn cmd_epc(
    g: &GlobalOpts,
    mode: ModeArg,
    manifest: &Path,
    truth: &Path,
    mock: Option<&PathBuf>,
    parallel: usize,
) -> CmdResult {
    let manifests = load_manifest(manifest)?;
    let truth = load_ground_truth(truth)?;
    let pipeline = pipeline(g, mock, parallel, None)?;
    let mode = match mode {
        ModeArg::Text => EpcMode::FromText,
        ModeArg::Images => EpcMode::FromImages,
    };
    let outcome = epc_direct_experiment(&pipeline, mode, &manifests, &truth).await?;
    for p in &outcome.predictions {
        let rating = p.rating.map(|r| r.letter().to_string()).unwrap_or_else(|| "-".into());
        let truth = p.truth.map(|r| r.letter().to_string()).unwrap_or_else(|| "-".into());
        match &p.problem {
            Some(why) => eprintln!("{}: predicted {rating}, truth {truth}: {why}", p.property_id),
            None => eprintln!("{}: predicted {rating}, truth {truth}", p.property_id),
        }
    }
    match outcome.rmse {
        Some(m) => println!(
            "EPC RMSE ({}): {:.3} (n={}, coverage {:.1}%)",
            mode.prompt_id(),
            m.value,
            m.n,
            100.0 * m.coverage
        ),
        None => println!("EPC RMSE ({}): - (no scored properties)", mode.prompt_id()),
    }
    let partial = outcome.failures().next().is_some() || outcome.rmse.is_none();
    Ok(if partial { EXIT_PARTIAL } else { 0 })
}

async fn run(cli: Cli) -> CmdResult {
    let g = &cli.global;
    match &cli.command {
        Command::Assess {
            manifest,
            property,
            mock,
            out,
            stages,
        } => cmd_assess(g, manifest, property, mock.as_ref(), out.as_deref(), stages.as_ref()).await,
        Command::Batch {
            manifest,
            mock,
            out,
            resume,
            parallel,
            stages,
            truth,
        } => {
            cmd_batch(g, manifest, mock.as_ref(), out, *resume, *parallel, stages.as_ref(), truth.as_deref()).await
        }
        Command::Evaluate {
            predictions,
            truth,
            age_metric,
            format,
            out,
            label,
        } => cmd_evaluate(predictions, truth, *age_metric, *format, out.as_deref(), label),
        Command::Prompts { action } => cmd_prompts(g, action),
        Command::EpcExperiment {
            mode,
            manifest,
            truth,
            mock,
            parallel,
        } => cmd_epc(g, *mode, manifest, truth, mock.as_ref(), *parallel).await,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // help and version exit 0, everything else 2
        Err(e) => e.exit(),
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();

    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(EXIT_IO);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
