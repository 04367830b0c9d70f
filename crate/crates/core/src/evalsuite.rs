//! Scoring predictions against ground truth.
//!
//! Categorical metrics keep a property in the denominator whenever the stage
//! was attempted, counting absent or `Unknown` predictions as wrong. Numeric
//! metrics only score properties that produced a value. Every metric carries
//! its denominator and the share of joined properties with a usable value.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{GroundTruthRecord, PropertyAssessment, PropertyManifest};
use crate::extract::parse_epc_rating;
use crate::pipeline::{Pipeline, PipelineError};
use crate::promptkit::PromptId;
use crate::types::{
    epc_numeric, representative_year, AgeBand, EnergyEstimate, EnergySource, EpcRating,
    GroundTruthAge, HeatingType, LightingPercent, WindowType,
};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no pairs to score")]
    EmptyInput,
    #[error(
        "no property ids in common (predictions only: {unmatched_predictions:?}; truth only: {unmatched_truth:?})"
    )]
    EmptyJoin {
        unmatched_predictions: Vec<String>,
        unmatched_truth: Vec<String>,
    },
    #[error("duplicate {side} record for property {id:?}")]
    Duplicate { side: &'static str, id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeMetric {
    /// Distance from the truth to the predicted interval.
    #[default]
    Band,
    /// Distance between representative years.
    Midpoint,
}

impl std::str::FromStr for AgeMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "band" => Ok(AgeMetric::Band),
            "midpoint" => Ok(AgeMetric::Midpoint),
            other => Err(format!("unknown age metric {other:?} (expected band or midpoint)")),
        }
    }
}

/// Gap in years between two bands; zero for equal or adjacent bands.
fn band_gap(a: AgeBand, b: AgeBand) -> f64 {
    let (older, newer) = if a <= b { (a, b) } else { (b, a) };
    if older == newer {
        return 0.0;
    }
    match (older.end_year(), newer.start_year()) {
        (Some(end), Some(start)) => f64::from((start - end).max(0)),
        _ => unreachable!("distinct bands have a finite boundary between them"),
    }
}

pub fn age_error_years(pred: AgeBand, truth: GroundTruthAge, mode: AgeMetric) -> f64 {
    match mode {
        AgeMetric::Band => match truth {
            GroundTruthAge::ExactYear(year) => {
                if pred.contains(year) {
                    0.0
                } else if let Some(start) = pred.start_year().filter(|&s| year < s) {
                    f64::from(start - year)
                } else {
                    // upper bound is exclusive, so the last year inside is end - 1
                    let end = pred.end_year().expect("year above a band implies a finite end");
                    f64::from(year - (end - 1))
                }
            }
            GroundTruthAge::Band(band) => band_gap(pred, band),
        },
        AgeMetric::Midpoint => {
            let truth_year = match truth {
                GroundTruthAge::ExactYear(y) => y,
                GroundTruthAge::Band(b) => representative_year(b),
            };
            f64::from((representative_year(pred) - truth_year).abs())
        }
    }
}

/// Percentage of pairs whose prediction equals the truth; `None` predictions count as wrong.
pub fn categorical_accuracy<T: PartialEq>(pairs: &[(Option<T>, T)]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let hits = pairs
        .iter()
        .filter(|(p, t)| p.as_ref() == Some(t))
        .count();
    Ok(100.0 * hits as f64 / pairs.len() as f64)
}

fn is_approx_window(pred: WindowType, truth: WindowType) -> bool {
    use WindowType::*;
    matches!(
        (pred, truth),
        (DoubleGlazed, HighEfficiencyDoubleOrTriple) | (HighEfficiencyDoubleOrTriple, DoubleGlazed)
    )
}

/// (perfect %, approximately-correct %) where approximate means double vs high-efficiency.
pub fn window_accuracy(pairs: &[(Option<WindowType>, WindowType)]) -> Result<(f64, f64), EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = pairs.len() as f64;
    let perfect = pairs.iter().filter(|(p, t)| *p == Some(*t)).count();
    let approx = pairs
        .iter()
        .filter(|(p, t)| p.is_some_and(|p| is_approx_window(p, *t)))
        .count();
    Ok((100.0 * perfect as f64 / n, 100.0 * approx as f64 / n))
}

fn rmse(diffs: impl ExactSizeIterator<Item = f64>) -> Result<f64, EvalError> {
    let n = diffs.len();
    if n == 0 {
        return Err(EvalError::EmptyInput);
    }
    let sum_sq: f64 = diffs.map(|d| d * d).sum();
    Ok((sum_sq / n as f64).sqrt())
}

pub fn lighting_rmse(pairs: &[(LightingPercent, LightingPercent)]) -> Result<f64, EvalError> {
    rmse(pairs.iter().map(|(p, t)| f64::from(p.get()) - f64::from(t.get())))
}

pub fn energy_mean_abs_diff(pairs: &[(EnergyEstimate, f64)]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let total: f64 = pairs.iter().map(|(p, t)| (p.point_kwh_m2() - t).abs()).sum();
    Ok(total / pairs.len() as f64)
}

pub fn epc_rmse(pairs: &[(EpcRating, EpcRating)]) -> Result<f64, EvalError> {
    rmse(pairs.iter().map(|(p, t)| f64::from(epc_numeric(*p) - epc_numeric(*t))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    /// Pairs scored.
    pub n: usize,
    /// Fraction of joined properties with a usable prediction.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub label: String,
    pub age_metric: AgeMetric,
    pub properties: usize,
    pub age_avg_error_years: Option<Metric>,
    pub building_type_pct: Option<Metric>,
    pub heating_type_pct: Option<Metric>,
    pub energy_source_pct: Option<Metric>,
    pub window_perfect_pct: Option<Metric>,
    pub window_approx_pct: Option<Metric>,
    pub lighting_rmse_pct: Option<Metric>,
    pub energy_mean_abs_diff: Option<Metric>,
    pub epc_rmse: Option<Metric>,
    pub unmatched_predictions: Vec<String>,
    pub unmatched_truth: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalOptions {
    pub age_metric: AgeMetric,
    pub label: String,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            age_metric: AgeMetric::Band,
            label: "AI".to_string(),
        }
    }
}

fn known_heating(h: Option<HeatingType>) -> Option<HeatingType> {
    h.filter(|h| *h != HeatingType::Unknown)
}

fn known_source(s: Option<EnergySource>) -> Option<EnergySource> {
    s.filter(|s| *s != EnergySource::Unknown)
}

pub fn evaluate(
    assessments: &[PropertyAssessment],
    ground_truth: &[GroundTruthRecord],
    options: &EvalOptions,
) -> Result<EvaluationReport, EvalError> {
    let mut preds: BTreeMap<&str, &PropertyAssessment> = BTreeMap::new();
    for a in assessments {
        if preds.insert(a.property_id.as_str(), a).is_some() {
            return Err(EvalError::Duplicate {
                side: "prediction",
                id: a.property_id.clone(),
            });
        }
    }
    let mut truths: BTreeMap<&str, &GroundTruthRecord> = BTreeMap::new();
    for t in ground_truth {
        if truths.insert(t.property_id.as_str(), t).is_some() {
            return Err(EvalError::Duplicate {
                side: "truth",
                id: t.property_id.clone(),
            });
        }
    }
    let pred_ids: BTreeSet<&str> = preds.keys().copied().collect();
    let truth_ids: BTreeSet<&str> = truths.keys().copied().collect();
    let unmatched_predictions: Vec<String> =
        pred_ids.difference(&truth_ids).map(|s| s.to_string()).collect();
    let unmatched_truth: Vec<String> = truth_ids.difference(&pred_ids).map(|s| s.to_string()).collect();
    let joined: Vec<(&PropertyAssessment, &GroundTruthRecord)> = pred_ids
        .intersection(&truth_ids)
        .map(|id| (preds[id], truths[id]))
        .collect();
    if joined.is_empty() {
        return Err(EvalError::EmptyJoin {
            unmatched_predictions,
            unmatched_truth,
        });
    }
    let total = joined.len() as f64;
    let metric = |value: Result<f64, EvalError>, n: usize, usable: usize| {
        value.ok().map(|value| Metric {
            value,
            n,
            coverage: usable as f64 / total,
        })
    };

    let ages: Vec<f64> = joined
        .iter()
        .filter_map(|(a, t)| a.age_band.map(|p| age_error_years(p, t.age, options.age_metric)))
        .collect();
    let age_avg = if ages.is_empty() {
        Err(EvalError::EmptyInput)
    } else {
        Ok(ages.iter().sum::<f64>() / ages.len() as f64)
    };

    let attempted = |id: PromptId| joined.iter().filter(move |(a, _)| a.stage_attempted(id));

    let building: Vec<_> = attempted(PromptId::P2).map(|(a, t)| (a.building_type, t.building_type)).collect();
    let heating: Vec<_> = attempted(PromptId::P3)
        .map(|(a, t)| (known_heating(a.heating_type), t.heating_type))
        .collect();
    let source: Vec<_> = attempted(PromptId::P3)
        .map(|(a, t)| (known_source(a.energy_source), t.energy_source))
        .collect();
    let windows: Vec<_> = attempted(PromptId::P4).map(|(a, t)| (a.window_type, t.window_type)).collect();
    let lighting: Vec<_> = joined
        .iter()
        .filter_map(|(a, t)| a.lighting.map(|p| (p, t.lighting)))
        .collect();
    let energy: Vec<_> = joined
        .iter()
        .filter_map(|(a, t)| a.energy_estimate.map(|p| (p, t.energy_kwh_m2)))
        .collect();
    let epc: Vec<_> = joined
        .iter()
        .filter_map(|(a, t)| a.epc_estimate.map(|p| (p, t.epc)))
        .collect();

    let usable = |pairs: &[(Option<_>, _)]| pairs.iter().filter(|(p, _): &&(Option<_>, _)| p.is_some()).count();
    let building_usable = building.iter().filter(|(p, _)| p.is_some()).count();
    let heating_usable = heating.iter().filter(|(p, _)| p.is_some()).count();
    let source_usable = source.iter().filter(|(p, _)| p.is_some()).count();
    let windows_usable = usable(&windows);

    let (perfect, approx) = match window_accuracy(&windows) {
        Ok((p, a)) => (Ok(p), Ok(a)),
        Err(_) => (Err(EvalError::EmptyInput), Err(EvalError::EmptyInput)),
    };

    Ok(EvaluationReport {
        label: options.label.clone(),
        age_metric: options.age_metric,
        properties: joined.len(),
        age_avg_error_years: metric(age_avg, ages.len(), ages.len()),
        building_type_pct: metric(categorical_accuracy(&building), building.len(), building_usable),
        heating_type_pct: metric(categorical_accuracy(&heating), heating.len(), heating_usable),
        energy_source_pct: metric(categorical_accuracy(&source), source.len(), source_usable),
        window_perfect_pct: metric(perfect, windows.len(), windows_usable),
        window_approx_pct: metric(approx, windows.len(), windows_usable),
        lighting_rmse_pct: metric(lighting_rmse(&lighting), lighting.len(), lighting.len()),
        energy_mean_abs_diff: metric(energy_mean_abs_diff(&energy), energy.len(), energy.len()),
        epc_rmse: metric(epc_rmse(&epc), epc.len(), epc.len()),
        unmatched_predictions,
        unmatched_truth,
    })
}

const COLUMNS: [(&str, &str); 9] = [
    ("Age Av error (years)", "age_avg_error_years"),
    ("Building Type (% correct)", "building_type_pct"),
    ("Heating type (% correct)", "heating_type_pct"),
    ("Energy source (% correct)", "energy_source_pct"),
    ("Window perfect (%)", "window_perfect_pct"),
    ("Window approx (%)", "window_approx_pct"),
    ("Lighting Eff RMSE (% low energy)", "lighting_rmse_pct"),
    ("Energy consump Av diff (kwh/m²)", "energy_mean_abs_diff"),
    ("EPC RMSE (letters)", "epc_rmse"),
];

impl EvaluationReport {
    fn metrics(&self) -> [Option<Metric>; 9] {
        [
            self.age_avg_error_years,
            self.building_type_pct,
            self.heating_type_pct,
            self.energy_source_pct,
            self.window_perfect_pct,
            self.window_approx_pct,
            self.lighting_rmse_pct,
            self.energy_mean_abs_diff,
            self.epc_rmse,
        ]
    }

    /// The EPC column only appears when EPC estimates were scored.
    fn column_count(&self) -> usize {
        if self.epc_rmse.is_some() {
            9
        } else {
            8
        }
    }

    /// Aligned plain-text table, one predictor row plus denominator and coverage rows.
    pub fn render_text(&self) -> String {
        let cols = self.column_count();
        let metrics = self.metrics();
        let fmt_opt = |m: &Option<Metric>, f: &dyn Fn(&Metric) -> String| m.as_ref().map(f).unwrap_or_else(|| "-".into());
        let rows: Vec<(String, Vec<String>)> = vec![
            (String::new(), COLUMNS[..cols].iter().map(|(h, _)| h.to_string()).collect()),
            (
                self.label.clone(),
                metrics[..cols].iter().map(|m| fmt_opt(m, &|m| format!("{:.2}", m.value))).collect(),
            ),
            ("n".into(), metrics[..cols].iter().map(|m| fmt_opt(m, &|m| m.n.to_string())).collect()),
            (
                "coverage".into(),
                metrics[..cols]
                    .iter()
                    .map(|m| fmt_opt(m, &|m| format!("{:.1}%", 100.0 * m.coverage)))
                    .collect(),
            ),
        ];
        let label_width = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0);
        let widths: Vec<usize> = (0..cols)
            .map(|c| rows.iter().map(|(_, cells)| cells[c].chars().count()).max().unwrap_or(0))
            .collect();

        let mut out = String::new();
        for (label, cells) in &rows {
            let _ = write!(out, "{label:<label_width$}");
            for (cell, w) in cells.iter().zip(&widths) {
                let pad = w - cell.chars().count();
                let _ = write!(out, " | {}{cell}", " ".repeat(pad));
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "properties joined: {} (age metric: {})",
            self.properties,
            match self.age_metric {
                AgeMetric::Band => "band",
                AgeMetric::Midpoint => "midpoint",
            }
        );
        if !self.unmatched_predictions.is_empty() {
            let _ = writeln!(out, "predictions without truth: {}", self.unmatched_predictions.join(", "));
        }
        if !self.unmatched_truth.is_empty() {
            let _ = writeln!(out, "truth without predictions: {}", self.unmatched_truth.join(", "));
        }
        out
    }

    /// One header row and one data row: metric values, then their denominators.
    pub fn render_csv(&self) -> String {
        let mut header = vec!["predictor".to_string()];
        header.extend(COLUMNS.iter().map(|(_, k)| k.to_string()));
        header.extend(COLUMNS.iter().map(|(_, k)| format!("n_{k}")));
        let metrics = self.metrics();
        let mut row = vec![csv_escape(&self.label)];
        row.extend(metrics.iter().map(|m| m.map(|m| format!("{}", m.value)).unwrap_or_default()));
        row.extend(metrics.iter().map(|m| m.map(|m| m.n.to_string()).unwrap_or_default()));
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpcMode {
    /// Rating from the stage summary text alone.
    FromText,
    /// Rating from the building images alone.
    FromImages,
}

impl EpcMode {
    pub fn prompt_id(self) -> PromptId {
        match self {
            EpcMode::FromText => PromptId::X1,
            EpcMode::FromImages => PromptId::X2,
        }
    }
}

impl std::str::FromStr for EpcMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" | "from_text" => Ok(EpcMode::FromText),
            "images" | "from_images" => Ok(EpcMode::FromImages),
            other => Err(format!("unknown EPC mode {other:?} (expected text or images)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpcPrediction {
    pub property_id: String,
    pub raw: Option<String>,
    pub rating: Option<EpcRating>,
    pub truth: Option<EpcRating>,
    pub problem: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpcExperimentOutcome {
    pub mode: EpcMode,
    pub predictions: Vec<EpcPrediction>,
    /// `None` when no property produced a rating with a matching truth record.
    pub rmse: Option<Metric>,
}

impl EpcExperimentOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &EpcPrediction> {
        self.predictions.iter().filter(|p| p.problem.is_some())
    }
}

/// Ask for the EPC letter directly, from the stage summary (`X1`) or the building images (`X2`).
pub async fn epc_direct_experiment(
    pipeline: &Pipeline,
    mode: EpcMode,
    manifests: &[PropertyManifest],
    ground_truth: &[GroundTruthRecord],
) -> Result<EpcExperimentOutcome, PipelineError> {
    let truth: BTreeMap<&str, EpcRating> = ground_truth
        .iter()
        .map(|t| (t.property_id.as_str(), t.epc))
        .collect();

    let predictions: Vec<EpcPrediction> = stream::iter(manifests)
        .map(|m| async {
            let mut pred = EpcPrediction {
                property_id: m.property_id.clone(),
                raw: None,
                rating: None,
                truth: truth.get(m.property_id.as_str()).copied(),
                problem: None,
            };
            let context = match mode {
                EpcMode::FromText => match pipeline.observation_summary(m).await {
                    Ok(summary) => Some(summary),
                    Err(problem) => {
                        pred.problem = Some(problem);
                        return pred;
                    }
                },
                EpcMode::FromImages => None,
            };
            match pipeline.run_prompt(m, mode.prompt_id(), context.as_deref()).await {
                Ok(result) => {
                    match parse_epc_rating(&result.text, mode.prompt_id()) {
                        Ok(r) => pred.rating = Some(r),
                        Err(d) => pred.problem = Some(d.to_string()),
                    }
                    pred.raw = Some(result.text);
                }
                Err(failure) => pred.problem = Some(format!("{:?}", failure.error)),
            }
            pred
        })
        .buffered(pipeline.config().parallel_properties.max(1))
        .collect()
        .await;

    let pairs: Vec<(EpcRating, EpcRating)> = predictions
        .iter()
        .filter_map(|p| Some((p.rating?, p.truth?)))
        .collect();
    let total = predictions.len().max(1) as f64;
    let rmse = epc_rmse(&pairs).ok().map(|value| Metric {
        value,
        n: pairs.len(),
        coverage: pairs.len() as f64 / total,
    });
    Ok(EpcExperimentOutcome {
        mode,
        predictions,
        rmse,
    })
}
