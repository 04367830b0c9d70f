//! Parsers turning free-text model answers into typed values.
//!
//! Option-list answers follow one rule: every option's `(n)` form and
//! canonical label are located case-insensitively, and the occurrence that
//! starts last in the text wins. Matches that sit inside a longer match
//! (e.g. "double glazed" inside "high efficiency double glazed") are
//! dropped first. Failures come back as a [`ParseDiagnostic`], never as a
//! guessed value.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::promptkit::PromptId;
use crate::types::{
    AgeBand, BuildingType, EnergyEstimate, EpcRating, HeatingObservation, LightingPercent,
    WindowType,
};

const SNIPPET_LIMIT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseFailure {
    NoAnswerFound,
    AmbiguousAnswer,
    MalformedJson,
    MissingField,
    OutOfRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParseDiagnostic {
    pub prompt_id: PromptId,
    pub reason: ParseFailure,
    pub snippet: String,
}

impl ParseDiagnostic {
    pub fn new(prompt_id: PromptId, reason: ParseFailure, text: &str) -> Self {
        Self {
            prompt_id,
            reason,
            snippet: truncate_chars(text.trim(), SNIPPET_LIMIT),
        }
    }
}

impl std::fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {:?} in {:?}", self.prompt_id, self.reason, self.snippet)
    }
}

fn truncate_chars(s: &str, limit: usize) -> String {
    s.chars().take(limit).collect()
}

/// Lowercase, unify dash variants to '-', collapse whitespace runs.
fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last_space = false;
    for c in text.chars() {
        let c = match c {
            '\u{2010}'..='\u{2015}' | '\u{2212}' => '-',
            c if c.is_whitespace() => ' ',
            c => c,
        };
        if c == ' ' {
            if !last_space {
                out.push(' ');
            }
            last_space = true;
        } else {
            out.extend(c.to_lowercase());
            last_space = false;
        }
    }
    out
}

struct OptionMatch<T> {
    start: usize,
    end: usize,
    value: T,
}

/// Last-occurrence selection over a set of (value, patterns) options.
fn select_last_option<T: Copy>(text: &str, options: &[(T, Vec<String>)]) -> Option<T> {
    let hay = normalize(text);
    let mut matches = Vec::new();
    for (value, patterns) in options {
        for pattern in patterns {
            let needle = normalize(pattern);
            let mut from = 0;
            while let Some(pos) = hay[from..].find(&needle) {
                let start = from + pos;
                let end = start + needle.len();
                if !embedded_in_word(&hay, start, end) {
                    matches.push(OptionMatch { start, end, value: *value });
                }
                from = start + 1;
                while !hay.is_char_boundary(from) {
                    from += 1;
                }
            }
        }
    }
    let outermost = matches.iter().filter(|m| {
        !matches.iter().any(|o| {
            o.start <= m.start && m.end <= o.end && (o.end - o.start) > (m.end - m.start)
        })
    });
    outermost
        .max_by(|a, b| a.start.cmp(&b.start).then((a.end - a.start).cmp(&(b.end - b.start))))
        .map(|m| m.value)
}

/// A label that starts or ends with an alphanumeric char must not continue a word.
fn embedded_in_word(hay: &str, start: usize, end: usize) -> bool {
    let before = hay[..start].chars().next_back();
    let after = hay[end..].chars().next();
    let first = hay[start..end].chars().next();
    let last = hay[start..end].chars().next_back();
    let glued = |edge: Option<char>, neighbour: Option<char>| {
        matches!((edge, neighbour), (Some(e), Some(n)) if e.is_alphanumeric() && n.is_alphanumeric())
    };
    glued(first, before) || glued(last, after)
}

fn numbered<T: Copy>(value: T, number: u8, labels: &[&str]) -> (T, Vec<String>) {
    let mut patterns = vec![format!("({number})")];
    patterns.extend(labels.iter().map(|l| l.to_string()));
    (value, patterns)
}

fn age_options() -> Vec<(AgeBand, Vec<String>)> {
    AgeBand::ALL
        .into_iter()
        .map(|b| {
            let extra: &[&str] = match b {
                AgeBand::Y2020_Now => &["2020-present"],
                _ => &[],
            };
            let mut opt = numbered(b, b.option_number(), &[b.label()]);
            opt.1.extend(extra.iter().map(|s| s.to_string()));
            opt
        })
        .collect()
}

fn building_options() -> Vec<(BuildingType, Vec<String>)> {
    BuildingType::ALL
        .into_iter()
        .map(|b| numbered(b, b.option_number(), &[b.label()]))
        .collect()
}

fn window_options() -> Vec<(WindowType, Vec<String>)> {
    WindowType::ALL
        .into_iter()
        .map(|w| {
            let extra: &[&str] = match w {
                WindowType::HighEfficiencyDoubleOrTriple => {
                    &["high efficiency double glazed", "triple glazed"]
                }
                _ => &[],
            };
            let mut opt = numbered(w, w.option_number(), &[w.label()]);
            opt.1.extend(extra.iter().map(|s| s.to_string()));
            opt
        })
        .collect()
}

fn lighting_options() -> Vec<(u8, Vec<String>)> {
    LightingPercent::OPTIONS
        .into_iter()
        .enumerate()
        .map(|(i, pct)| {
            let label = LightingPercent::new(pct.into())
                .ok()
                .and_then(|l| l.option_label())
                .expect("options are labelled");
            let mut opt = numbered(pct, i as u8 + 1, &[label.as_str()]);
            if pct == 0 {
                opt.1.push("no low-energy lighting".into());
            } else {
                opt.1.push(format!("low-energy in {pct}%"));
            }
            opt
        })
        .collect()
}

pub fn parse_age_band(text: &str) -> Result<AgeBand, ParseDiagnostic> {
    select_last_option(text, &age_options())
        .ok_or_else(|| ParseDiagnostic::new(PromptId::P1, ParseFailure::NoAnswerFound, text))
}

pub fn parse_building_type(text: &str) -> Result<BuildingType, ParseDiagnostic> {
    select_last_option(text, &building_options())
        .ok_or_else(|| ParseDiagnostic::new(PromptId::P2, ParseFailure::NoAnswerFound, text))
}

pub fn parse_window_type(text: &str) -> Result<WindowType, ParseDiagnostic> {
    select_last_option(text, &window_options())
        .ok_or_else(|| ParseDiagnostic::new(PromptId::P4, ParseFailure::NoAnswerFound, text))
}

pub fn parse_lighting(text: &str) -> Result<LightingPercent, ParseDiagnostic> {
    select_last_option(text, &lighting_options())
        .map(|pct| LightingPercent::new(pct.into()).expect("option values are in range"))
        .ok_or_else(|| ParseDiagnostic::new(PromptId::P5, ParseFailure::NoAnswerFound, text))
}

/// Byte span of the first balanced `{...}` object, skipping braces inside strings.
fn outer_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

const HEATING_KEYS: [&str; 5] = [
    "air vent",
    "radiators",
    "water filled",
    "electric panel heaters",
    "electric storage heaters",
];

pub fn parse_heating_observation(text: &str) -> Result<HeatingObservation, ParseDiagnostic> {
    let fail = |reason| ParseDiagnostic::new(PromptId::P3, reason, text);
    // Fences only wrap the object, so the brace scan already ignores them.
    let object = outer_object(text).ok_or_else(|| fail(ParseFailure::MalformedJson))?;
    let value: Value = serde_json::from_str(object).map_err(|_| fail(ParseFailure::MalformedJson))?;
    let map = value.as_object().ok_or_else(|| fail(ParseFailure::MalformedJson))?;

    let mut flags = [false; 5];
    for (slot, key) in flags.iter_mut().zip(HEATING_KEYS) {
        let found: Vec<&Value> = map
            .iter()
            .filter(|(k, _)| normalize(k).trim() == key)
            .map(|(_, v)| v)
            .collect();
        let v = match found.as_slice() {
            [] => return Err(fail(ParseFailure::MissingField)),
            [v] => *v,
            _ => return Err(fail(ParseFailure::AmbiguousAnswer)),
        };
        *slot = match v.as_str().map(|s| s.trim().to_ascii_lowercase()).as_deref() {
            Some("y") => true,
            Some("n") => false,
            _ => return Err(fail(ParseFailure::OutOfRange)),
        };
    }
    let [air_vent, radiators, water_filled, panel, storage] = flags;
    Ok(HeatingObservation {
        air_vent,
        radiators,
        water_filled,
        panel,
        storage,
    })
}

static ENERGY_RE: LazyLock<Regex> = LazyLock::new(|| {
    let num = r"(\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?)";
    Regex::new(&format!(r"(?i)(?:{num}\s*(?:-|to)\s*)?{num}\s*kwh")).unwrap()
});

fn parse_number(s: &str) -> Option<f64> {
    s.replace(',', "").parse().ok()
}

/// Numbers tagged with a kWh unit; with two or more, the last two bound the range.
pub fn parse_energy_estimate(text: &str) -> Result<EnergyEstimate, ParseDiagnostic> {
    let hay = normalize(text);
    let mut values = Vec::new();
    for caps in ENERGY_RE.captures_iter(&hay) {
        if let Some(first) = caps.get(1) {
            values.extend(parse_number(first.as_str()));
        }
        values.extend(caps.get(2).and_then(|m| parse_number(m.as_str())));
    }
    let fail = |reason| ParseDiagnostic::new(PromptId::P6, reason, text);
    let estimate = match values.as_slice() {
        [] => return Err(fail(ParseFailure::NoAnswerFound)),
        [only] => EnergyEstimate::point(*only),
        [.., a, b] => EnergyEstimate::range(a.min(*b), a.max(*b)),
    };
    estimate.map_err(|_| fail(ParseFailure::OutOfRange))
}

static EPC_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"(?x)
        (?:
            (?i:\b(?:rating|band|grade)\b)
            (?:\s*[:=\-]\s*|\s+)
            (?:(?i:is|of|would|could|should|likely|probably|be|an?|around|about|:)\s*)*
            ["'*(]*([A-G])\b
          |
            \(([A-G])\)
        )"#,
    )
    .unwrap()
});

pub fn parse_epc_rating(text: &str, prompt_id: PromptId) -> Result<EpcRating, ParseDiagnostic> {
    EPC_RE
        .captures_iter(text)
        .filter_map(|c| c.get(1).or_else(|| c.get(2)))
        .max_by_key(|m| m.start())
        .and_then(|m| m.as_str().chars().next())
        .and_then(EpcRating::from_letter)
        .ok_or_else(|| ParseDiagnostic::new(prompt_id, ParseFailure::NoAnswerFound, text))
}
