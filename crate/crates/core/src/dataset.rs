//! Property manifests, ground-truth records and persisted assessments.
//!
//! * Manifests are JSON: an array of properties, each with its image URIs and
//!   the four evidence groups (building, heating, windows, lighting) as index
//!   lists into those images.
//! * Ground truth is CSV with a fixed header (see [`GROUND_TRUTH_HEADER`]).
//!   Index lists inside cells are semicolon separated.
//! * Assessments are JSON Lines, one self-contained record per property.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::extract::ParseDiagnostic;
use crate::llm::LlmErrorKind;
use crate::promptkit::{ImageRef, PromptId};
use crate::types::{
    AgeBand, BuildingType, EnergyEstimate, EnergySource, EpcRating, GroundTruthAge,
    HeatingObservation, HeatingType, LightingPercent, WindowType,
};

pub const GROUND_TRUTH_HEADER: [&str; 12] = [
    "id",
    "building_images",
    "heating_images",
    "window_images",
    "lighting_images",
    "building_age",
    "building_type",
    "main_heating",
    "window_type",
    "lighting",
    "energy_kwh_m2",
    "epc_rating",
];

/// Images per evidence group, inclusive.
pub const GROUP_SIZE: std::ops::RangeInclusive<usize> = 1..=5;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {location}: {message}", path.display())]
    Schema {
        path: PathBuf,
        location: String,
        message: String,
    },
    #[error("{}: unknown heating label(s): {}", path.display(), format_labels(labels))]
    UnknownHeatingLabel {
        path: PathBuf,
        /// (property id, label) for every row that failed.
        labels: Vec<(String, String)>,
    },
}

fn format_labels(labels: &[(String, String)]) -> String {
    labels
        .iter()
        .map(|(id, l)| format!("{id}={l:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn schema(path: &Path, location: impl Into<String>, message: impl Into<String>) -> DatasetError {
    DatasetError::Schema {
        path: path.to_path_buf(),
        location: location.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ImageGroup {
    /// Building exterior and window views, evidence for age and type.
    Building,
    Heating,
    Windows,
    Lighting,
}

impl ImageGroup {
    pub const ALL: [ImageGroup; 4] = [
        ImageGroup::Building,
        ImageGroup::Heating,
        ImageGroup::Windows,
        ImageGroup::Lighting,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ImageGroup::Building => "building",
            ImageGroup::Heating => "heating",
            ImageGroup::Windows => "windows",
            ImageGroup::Lighting => "lighting",
        }
    }
}

fn index_list<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Cell {
        List(Vec<usize>),
        Text(String),
    }
    match Cell::deserialize(d)? {
        Cell::List(v) => Ok(v),
        Cell::Text(s) => parse_index_list(&s).map_err(serde::de::Error::custom),
    }
}

/// Parse a `"0;2;3;5"` cell.
pub fn parse_index_list(cell: &str) -> Result<Vec<usize>, String> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(Vec::new());
    }
    cell.split(';')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid image index {part:?} in {cell:?}"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageGroups {
    #[serde(deserialize_with = "index_list")]
    pub building: Vec<usize>,
    #[serde(deserialize_with = "index_list")]
    pub heating: Vec<usize>,
    #[serde(deserialize_with = "index_list")]
    pub windows: Vec<usize>,
    #[serde(deserialize_with = "index_list")]
    pub lighting: Vec<usize>,
}

impl ImageGroups {
    pub fn get(&self, group: ImageGroup) -> &[usize] {
        match group {
            ImageGroup::Building => &self.building,
            ImageGroup::Heating => &self.heating,
            ImageGroup::Windows => &self.windows,
            ImageGroup::Lighting => &self.lighting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyManifest {
    pub property_id: String,
    pub images: Vec<String>,
    pub groups: ImageGroups,
    /// Opaque metadata carried through unchanged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epc_url: Option<String>,
    /// Directory relative image paths resolve against; set by the loader.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl PropertyManifest {
    pub fn group_uris(&self, group: ImageGroup) -> Vec<&str> {
        self.groups
            .get(group)
            .iter()
            .map(|&i| self.images[i].as_str())
            .collect()
    }

    pub fn group_images(&self, group: ImageGroup) -> Vec<ImageRef> {
        self.group_uris(group)
            .into_iter()
            .map(|uri| ImageRef::from_manifest(uri, self.base_dir.as_deref()))
            .collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        validate_property_id(&self.property_id)?;
        for group in ImageGroup::ALL {
            let indices = self.groups.get(group);
            if !GROUP_SIZE.contains(&indices.len()) {
                return Err(format!(
                    "group {} has {} images; expected {} to {}",
                    group.key(),
                    indices.len(),
                    GROUP_SIZE.start(),
                    GROUP_SIZE.end()
                ));
            }
            if let Some(bad) = indices.iter().find(|&&i| i >= self.images.len()) {
                return Err(format!(
                    "group {} index {bad} out of range for {} images",
                    group.key(),
                    self.images.len()
                ));
            }
        }
        Ok(())
    }
}

/// Ids become directory names for fixtures and cache entries.
pub fn validate_property_id(id: &str) -> Result<(), String> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(format!(
            "property id {id:?} must be non-empty and use only ASCII letters, digits, '-', '_' or '.'"
        ))
    }
}

pub fn load_manifest(path: &Path) -> Result<Vec<PropertyManifest>, DatasetError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let mut manifests: Vec<PropertyManifest> = serde_json::from_slice(&bytes).map_err(|e| {
        schema(path, format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    let base = path.parent().map(Path::to_path_buf);
    let mut seen = BTreeSet::new();
    for m in &mut manifests {
        m.validate()
            .map_err(|msg| schema(path, format!("property {}", m.property_id), msg))?;
        if !seen.insert(m.property_id.clone()) {
            return Err(schema(path, format!("property {}", m.property_id), "duplicate property id"));
        }
        m.base_dir = base.clone();
    }
    Ok(manifests)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub property_id: String,
    pub groups: ImageGroups,
    pub age: GroundTruthAge,
    pub building_type: BuildingType,
    pub heating_label: String,
    pub heating_type: HeatingType,
    pub energy_source: EnergySource,
    pub window_type: WindowType,
    pub lighting: LightingPercent,
    pub energy_kwh_m2: f64,
    pub epc: EpcRating,
}

/// Lowercase, unify dashes, collapse whitespace, drop trailing punctuation.
fn canon(cell: &str) -> String {
    let unified: String = cell
        .chars()
        .map(|c| match c {
            '\u{2010}'..='\u{2015}' => '-',
            c => c.to_ascii_lowercase(),
        })
        .collect();
    unified
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(['.', ';', ','])
        .to_string()
}

/// Free-text main-heating descriptions and their canonical (type, source).
pub const HEATING_SYNONYMS: &[(&str, HeatingType, EnergySource)] = &[
    ("community scheme with underfloor heating", HeatingType::Underfloor, EnergySource::Community),
    ("community scheme underfloor heating", HeatingType::Underfloor, EnergySource::Community),
    ("community scheme with water radiators", HeatingType::WaterRads, EnergySource::Community),
    ("community scheme with radiators", HeatingType::WaterRads, EnergySource::Community),
    ("community scheme radiators", HeatingType::WaterRads, EnergySource::Community),
    ("community scheme with warm air", HeatingType::WarmAir, EnergySource::Community),
    ("community scheme warm air", HeatingType::WarmAir, EnergySource::Community),
    ("gas boiler water radiators", HeatingType::WaterRads, EnergySource::Gas),
    ("gas boiler with water radiators", HeatingType::WaterRads, EnergySource::Gas),
    ("boiler and radiators, mains gas", HeatingType::WaterRads, EnergySource::Gas),
    ("boiler and underfloor heating, mains gas", HeatingType::Underfloor, EnergySource::Gas),
    ("gas boiler underfloor heating", HeatingType::Underfloor, EnergySource::Gas),
    ("warm air, mains gas", HeatingType::WarmAir, EnergySource::Gas),
    ("electric panel heaters", HeatingType::ElectricPanels, EnergySource::Electric),
    ("room heaters, electric", HeatingType::ElectricPanels, EnergySource::Electric),
    ("electric storage heaters", HeatingType::ElectricStorage, EnergySource::Electric),
    ("storage heaters, electric", HeatingType::ElectricStorage, EnergySource::Electric),
    ("electric underfloor heating", HeatingType::Underfloor, EnergySource::Electric),
    ("electric ceiling heating", HeatingType::Underfloor, EnergySource::Electric),
    ("warm air, electric", HeatingType::WarmAir, EnergySource::Electric),
    ("electric warm air", HeatingType::WarmAir, EnergySource::Electric),
];

pub fn canonical_heating(label: &str) -> Option<(HeatingType, EnergySource)> {
    let key = canon(label);
    HEATING_SYNONYMS
        .iter()
        .find(|(l, _, _)| *l == key)
        .map(|(_, h, s)| (*h, *s))
}

fn parse_age_cell(cell: &str) -> Result<GroundTruthAge, String> {
    let c = canon(cell);
    if let Ok(year) = c.parse::<i32>() {
        return Ok(GroundTruthAge::ExactYear(year));
    }
    AgeBand::ALL
        .into_iter()
        .find(|b| b.label() == c || (*b == AgeBand::Y2020_Now && c == "after 2020"))
        .map(GroundTruthAge::Band)
        .ok_or_else(|| format!("unrecognised building age {cell:?}"))
}

fn parse_building_type_cell(cell: &str) -> Result<BuildingType, String> {
    let c = canon(cell);
    let found = match c.as_str() {
        ">5 units" | "5+ units" | ">=5 units" | "5 or more units" => Some(BuildingType::Units5Plus),
        "2-4 units" => Some(BuildingType::Units2to4),
        "detached" => Some(BuildingType::SingleFamilyDetached),
        "attached" | "semi-detached" | "terraced" => Some(BuildingType::SingleFamilyAttached),
        _ => BuildingType::ALL.into_iter().find(|b| {
            canon(b.label()) == c || c == b.option_number().to_string()
        }),
    };
    found.ok_or_else(|| format!("unrecognised building type {cell:?}"))
}

fn parse_window_cell(cell: &str) -> Result<WindowType, String> {
    let c = canon(cell);
    let found = match c.as_str() {
        "1" | "single glazed" | "single glazing" => Some(WindowType::SingleGlazed),
        "2" | "double glazed" | "double glazing" => Some(WindowType::DoubleGlazed),
        "3"
        | "high efficiency double glazed"
        | "high efficiency double glazing"
        | "high efficiency double or triple glazed"
        | "triple glazed"
        | "triple glazing" => Some(WindowType::HighEfficiencyDoubleOrTriple),
        _ => None,
    };
    found.ok_or_else(|| format!("unrecognised window type {cell:?}"))
}

static PERCENT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:low energy in )?(\d{1,3})\s*%?$").unwrap());

fn parse_lighting_cell(cell: &str) -> Result<LightingPercent, String> {
    let c = canon(cell);
    if c == "no low energy lighting" {
        return LightingPercent::new(0).map_err(|e| e.to_string());
    }
    let caps = PERCENT_RE
        .captures(&c)
        .ok_or_else(|| format!("unrecognised lighting value {cell:?}"))?;
    let pct: i64 = caps[1].parse().map_err(|_| format!("bad percentage {cell:?}"))?;
    LightingPercent::new(pct).map_err(|e| e.to_string())
}

fn parse_energy_cell(cell: &str) -> Result<f64, String> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| format!("energy {cell:?} is not a number"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("energy {cell:?} must be finite and non-negative"))
    }
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruthRecord>, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header = reader
        .headers()
        .map_err(|e| schema(path, "header", e.to_string()))?
        .clone();
    if header.iter().ne(GROUND_TRUTH_HEADER.iter().copied()) {
        return Err(schema(
            path,
            "header",
            format!(
                "expected header {:?}, found {:?}",
                GROUND_TRUTH_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut records = Vec::new();
    let mut unknown = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| schema(path, format!("line {line}"), e.to_string()))?;
        let cell = |col: usize| row.get(col).unwrap_or("");
        let at = |col: usize| format!("line {line} column {}", GROUND_TRUTH_HEADER[col]);
        let bad = |col: usize, msg: String| schema(path, at(col), msg);

        let property_id = cell(0).to_string();
        validate_property_id(&property_id).map_err(|m| bad(0, m))?;
        if !seen.insert(property_id.clone()) {
            return Err(bad(0, format!("duplicate id {property_id:?}")));
        }
        let groups = ImageGroups {
            building: parse_index_list(cell(1)).map_err(|m| bad(1, m))?,
            heating: parse_index_list(cell(2)).map_err(|m| bad(2, m))?,
            windows: parse_index_list(cell(3)).map_err(|m| bad(3, m))?,
            lighting: parse_index_list(cell(4)).map_err(|m| bad(4, m))?,
        };
        let age = parse_age_cell(cell(5)).map_err(|m| bad(5, m))?;
        let building_type = parse_building_type_cell(cell(6)).map_err(|m| bad(6, m))?;
        let heating_label = cell(7).to_string();
        let window_type = parse_window_cell(cell(8)).map_err(|m| bad(8, m))?;
        let lighting = parse_lighting_cell(cell(9)).map_err(|m| bad(9, m))?;
        let energy_kwh_m2 = parse_energy_cell(cell(10)).map_err(|m| bad(10, m))?;
        let epc: EpcRating = cell(11).parse().map_err(|e: crate::types::DomainError| bad(11, e.to_string()))?;

        let Some((heating_type, energy_source)) = canonical_heating(&heating_label) else {
            unknown.push((property_id, heating_label));
            continue;
        };
        records.push(GroundTruthRecord {
            property_id,
            groups,
            age,
            building_type,
            heating_label,
            heating_type,
            energy_source,
            window_type,
            lighting,
            energy_kwh_m2,
            epc,
        });
    }
    if !unknown.is_empty() {
        return Err(DatasetError::UnknownHeatingLabel {
            path: path.to_path_buf(),
            labels: unknown,
        });
    }
    Ok(records)
}

/// Why a stage produced no usable value, beyond parse diagnostics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StageError {
    Llm { kind: LlmErrorKind, message: String },
    ContextUnavailable { missing: Vec<PromptId> },
    Prompt { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageFailure {
    pub prompt_id: PromptId,
    pub error: StageError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyAssessment {
    pub property_id: String,
    pub model_name: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    /// Raw model text per stage, kept even when parsing failed.
    pub raw: BTreeMap<PromptId, String>,
    pub age_band: Option<AgeBand>,
    pub building_type: Option<BuildingType>,
    pub heating_observation: Option<HeatingObservation>,
    pub heating_type: Option<HeatingType>,
    pub energy_source: Option<EnergySource>,
    pub window_type: Option<WindowType>,
    pub lighting: Option<LightingPercent>,
    pub energy_estimate: Option<EnergyEstimate>,
    pub recommendation_text: Option<String>,
    #[serde(default)]
    pub epc_estimate: Option<EpcRating>,
    pub diagnostics: Vec<ParseDiagnostic>,
    pub failures: Vec<StageFailure>,
}

impl PropertyAssessment {
    pub fn new(property_id: impl Into<String>, model_name: impl Into<String>) -> Self {
        let now = Utc::now();
        Self {
            property_id: property_id.into(),
            model_name: model_name.into(),
            started_at: now,
            finished_at: now,
            raw: BTreeMap::new(),
            age_band: None,
            building_type: None,
            heating_observation: None,
            heating_type: None,
            energy_source: None,
            window_type: None,
            lighting: None,
            energy_estimate: None,
            recommendation_text: None,
            epc_estimate: None,
            diagnostics: Vec::new(),
            failures: Vec::new(),
        }
    }

    /// A stage counts as attempted when it returned text or recorded a failure.
    pub fn stage_attempted(&self, id: PromptId) -> bool {
        self.raw.contains_key(&id) || self.failures.iter().any(|f| f.prompt_id == id)
    }

    /// No stage returned any text at all.
    pub fn wholly_failed(&self) -> bool {
        self.raw.is_empty() && !self.failures.is_empty()
    }

    pub fn has_problems(&self) -> bool {
        !self.diagnostics.is_empty() || !self.failures.is_empty()
    }
}

pub fn write_assessments(path: &Path, assessments: &[PropertyAssessment]) -> Result<(), DatasetError> {
    let mut writer = AssessmentWriter::create(path)?;
    for a in assessments {
        writer.append(a)?;
    }
    Ok(())
}

pub fn read_assessments(path: &Path) -> Result<Vec<PropertyAssessment>, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| schema(path, format!("line {}", i + 1), e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

/// Line-at-a-time JSON Lines appender; each record is flushed as written.
pub struct AssessmentWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl AssessmentWriter {
    pub fn create(path: &Path) -> Result<Self, DatasetError> {
        Self::open(path, false)
    }

    pub fn append_to(path: &Path) -> Result<Self, DatasetError> {
        Self::open(path, true)
    }

    fn open(path: &Path, append: bool) -> Result<Self, DatasetError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err(path))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, assessment: &PropertyAssessment) -> Result<(), DatasetError> {
        let line = serde_json::to_string(assessment).map_err(|e| schema(&self.path, "record", e.to_string()))?;
        self.out.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        self.out.write_all(b"\n").map_err(io_err(&self.path))?;
        self.out.flush().map_err(io_err(&self.path))
    }
}
