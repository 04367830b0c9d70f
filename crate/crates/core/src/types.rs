//! Domain enumerations and value types shared by every stage of the pipeline.
//!
//! Everything here is an immutable value. Conversions between representations
//! (year to band, band to representative year, rating letter to number) are
//! pure and total.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("lighting percentage {0} is outside 0..=100")]
    LightingOutOfRange(i64),
    #[error("energy estimate [{low}, {high}] is invalid (need 0 <= low <= high, finite)")]
    InvalidEnergyRange { low: f64, high: f64 },
    #[error("energy consumption {0} must be a finite non-negative number")]
    InvalidEnergy(f64),
    #[error("unrecognised {kind} value {value:?}")]
    UnknownLabel { kind: &'static str, value: String },
}

/// Construction-age band, exactly the seven options offered by the age prompt.
///
/// Bands are half-open on the right: `Y1900_1930` covers `[1900, 1930)`.
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBand {
    Before1900,
    Y1900_1930,
    Y1930_1950,
    Y1950_1970,
    Y1970_1990,
    Y1990_2020,
    Y2020_Now,
}

impl AgeBand {
    pub const ALL: [AgeBand; 7] = [
        AgeBand::Before1900,
        AgeBand::Y1900_1930,
        AgeBand::Y1930_1950,
        AgeBand::Y1950_1970,
        AgeBand::Y1970_1990,
        AgeBand::Y1990_2020,
        AgeBand::Y2020_Now,
    ];

    /// Inclusive lower bound, or `None` for the open-ended oldest band.
    pub fn start_year(self) -> Option<i32> {
        match self {
            AgeBand::Before1900 => None,
            AgeBand::Y1900_1930 => Some(1900),
            AgeBand::Y1930_1950 => Some(1930),
            AgeBand::Y1950_1970 => Some(1950),
            AgeBand::Y1970_1990 => Some(1970),
            AgeBand::Y1990_2020 => Some(1990),
            AgeBand::Y2020_Now => Some(2020),
        }
    }

    /// Exclusive upper bound, or `None` for the open-ended newest band.
    pub fn end_year(self) -> Option<i32> {
        match self {
            AgeBand::Before1900 => Some(1900),
            AgeBand::Y1900_1930 => Some(1930),
            AgeBand::Y1930_1950 => Some(1950),
            AgeBand::Y1950_1970 => Some(1970),
            AgeBand::Y1970_1990 => Some(1990),
            AgeBand::Y1990_2020 => Some(2020),
            AgeBand::Y2020_Now => None,
        }
    }

    pub fn contains(self, year: i32) -> bool {
        self.start_year().is_none_or(|lo| year >= lo) && self.end_year().is_none_or(|hi| year < hi)
    }

    /// 1-based option number in the age prompt.
    pub fn option_number(self) -> u8 {
        self as u8 + 1
    }

    /// Option label as written in the age prompt.
    pub fn label(self) -> &'static str {
        match self {
            AgeBand::Before1900 => "before 1900",
            AgeBand::Y1900_1930 => "1900-1930",
            AgeBand::Y1930_1950 => "1930-1950",
            AgeBand::Y1950_1970 => "1950-1970",
            AgeBand::Y1970_1990 => "1970-1990",
            AgeBand::Y1990_2020 => "1990-2020",
            AgeBand::Y2020_Now => "2020-now",
        }
    }
}

impl fmt::Display for AgeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Map any calendar year onto the unique band that contains it.
pub fn age_band_for_year(year: i32) -> AgeBand {
    AgeBand::ALL
        .into_iter()
        .find(|b| b.contains(year))
        .expect("age bands partition the integers")
}

/// Year standing in for a whole band when an exact year is needed.
///
/// Midpoint for bounded bands; the two open-ended bands use fixed constants.
pub fn representative_year(band: AgeBand) -> i32 {
    match (band.start_year(), band.end_year()) {
        (Some(lo), Some(hi)) => (lo + hi) / 2,
        (None, _) => 1890,
        (_, None) => 2022,
    }
}

/// EIA dwelling categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BuildingType {
    SingleFamilyDetached,
    SingleFamilyAttached,
    Units2to4,
    Units5Plus,
    MobileHome,
}

impl BuildingType {
    pub const ALL: [BuildingType; 5] = [
        BuildingType::SingleFamilyDetached,
        BuildingType::SingleFamilyAttached,
        BuildingType::Units2to4,
        BuildingType::Units5Plus,
        BuildingType::MobileHome,
    ];

    pub fn option_number(self) -> u8 {
        self as u8 + 1
    }

    pub fn label(self) -> &'static str {
        match self {
            BuildingType::SingleFamilyDetached => "Single-family detached",
            BuildingType::SingleFamilyAttached => "Single-family attached",
            BuildingType::Units2to4 => "Apartments in buildings with 2-4 units",
            BuildingType::Units5Plus => "Apartments in buildings with 5 or more units",
            BuildingType::MobileHome => "Mobile home",
        }
    }
}

impl fmt::Display for BuildingType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// The five yes/no answers of the heating-systems prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatingObservation {
    pub air_vent: bool,
    pub radiators: bool,
    /// Only meaningful when `radiators` is set, but kept as reported.
    pub water_filled: bool,
    pub panel: bool,
    pub storage: bool,
}

impl HeatingObservation {
    /// All 32 possible observations, in binary counting order.
    pub fn all() -> impl Iterator<Item = HeatingObservation> {
        (0u8..32).map(|bits| HeatingObservation {
            air_vent: bits & 0b10000 != 0,
            radiators: bits & 0b01000 != 0,
            water_filled: bits & 0b00100 != 0,
            panel: bits & 0b00010 != 0,
            storage: bits & 0b00001 != 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeatingType {
    WaterRads,
    ElectricPanels,
    ElectricStorage,
    Underfloor,
    WarmAir,
    Unknown,
}

impl HeatingType {
    pub fn label(self) -> &'static str {
        match self {
            HeatingType::WaterRads => "water rads",
            HeatingType::ElectricPanels => "electric panels",
            HeatingType::ElectricStorage => "electric storage",
            HeatingType::Underfloor => "underfloor",
            HeatingType::WarmAir => "warm air",
            HeatingType::Unknown => "unknown",
        }
    }
}

impl fmt::Display for HeatingType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnergySource {
    Community,
    Gas,
    Electric,
    Unknown,
}

impl EnergySource {
    pub fn label(self) -> &'static str {
        match self {
            EnergySource::Community => "community",
            EnergySource::Gas => "gas",
            EnergySource::Electric => "electric",
            EnergySource::Unknown => "unknown",
        }
    }
}

impl fmt::Display for EnergySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Glazing class. Ordinal: 1 single, 2 double, 3 high-efficiency double or triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WindowType {
    SingleGlazed = 1,
    DoubleGlazed = 2,
    HighEfficiencyDoubleOrTriple = 3,
}

impl WindowType {
    pub const ALL: [WindowType; 3] = [
        WindowType::SingleGlazed,
        WindowType::DoubleGlazed,
        WindowType::HighEfficiencyDoubleOrTriple,
    ];

    pub fn option_number(self) -> u8 {
        self as u8
    }

    pub fn label(self) -> &'static str {
        match self {
            WindowType::SingleGlazed => "single glazed",
            WindowType::DoubleGlazed => "double glazed",
            WindowType::HighEfficiencyDoubleOrTriple => "high efficiency double or triple glazed",
        }
    }
}

impl fmt::Display for WindowType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Share of low-energy lighting, 0..=100.
///
/// Parsed predictions only ever hold one of the six prompt options
/// (0, 20, ..., 100); ground truth may hold any integer percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct LightingPercent(u8);

impl LightingPercent {
    /// The six options of the lighting prompt, in option order.
    pub const OPTIONS: [u8; 6] = [0, 20, 40, 60, 80, 100];

    pub fn new(percent: i64) -> Result<Self, DomainError> {
        if (0..=100).contains(&percent) {
            Ok(Self(percent as u8))
        } else {
            Err(DomainError::LightingOutOfRange(percent))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Option label in the lighting prompt, when the value is one of the six options.
    pub fn option_label(self) -> Option<String> {
        match self.0 {
            0 => Some("no low energy lighting".to_string()),
            p if p % 20 == 0 => Some(format!("low energy in {p}%")),
            _ => None,
        }
    }
}

impl TryFrom<i64> for LightingPercent {
    type Error = DomainError;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<LightingPercent> for u8 {
    fn from(v: LightingPercent) -> u8 {
        v.0
    }
}

impl fmt::Display for LightingPercent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}%", self.0)
    }
}

/// Energy consumption estimate in kWh/m² per year; a range collapsed to its midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnergyEstimate")]
pub struct EnergyEstimate {
    low_kwh_m2: f64,
    high_kwh_m2: f64,
    point_kwh_m2: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnergyEstimate {
    low_kwh_m2: f64,
    high_kwh_m2: f64,
    #[allow(dead_code)]
    point_kwh_m2: f64,
}

impl TryFrom<RawEnergyEstimate> for EnergyEstimate {
    type Error = DomainError;
    fn try_from(raw: RawEnergyEstimate) -> Result<Self, Self::Error> {
        Self::range(raw.low_kwh_m2, raw.high_kwh_m2)
    }
}

impl EnergyEstimate {
    pub fn range(low: f64, high: f64) -> Result<Self, DomainError> {
        if !(low.is_finite() && high.is_finite() && low >= 0.0 && low <= high) {
            return Err(DomainError::InvalidEnergyRange { low, high });
        }
        Ok(Self {
            low_kwh_m2: low,
            high_kwh_m2: high,
            point_kwh_m2: (low + high) / 2.0,
        })
    }

    pub fn point(value: f64) -> Result<Self, DomainError> {
        Self::range(value, value)
    }

    pub fn low_kwh_m2(&self) -> f64 {
        self.low_kwh_m2
    }

    pub fn high_kwh_m2(&self) -> f64 {
        self.high_kwh_m2
    }

    pub fn point_kwh_m2(&self) -> f64 {
        self.point_kwh_m2
    }
}

/// Energy Performance Certificate letter, A (best) to G (worst).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EpcRating {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl EpcRating {
    pub const ALL: [EpcRating; 7] = [
        EpcRating::A,
        EpcRating::B,
        EpcRating::C,
        EpcRating::D,
        EpcRating::E,
        EpcRating::F,
        EpcRating::G,
    ];

    pub fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(EpcRating::A),
            'B' => Some(EpcRating::B),
            'C' => Some(EpcRating::C),
            'D' => Some(EpcRating::D),
            'E' => Some(EpcRating::E),
            'F' => Some(EpcRating::F),
            'G' => Some(EpcRating::G),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        (b'A' + self as u8) as char
    }
}

impl fmt::Display for EpcRating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for EpcRating {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let mut chars = t.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::from_letter(c),
            _ => None,
        }
        .ok_or_else(|| DomainError::UnknownLabel {
            kind: "EPC rating",
            value: s.to_string(),
        })
    }
}

/// Letter position as a number: A=1 ... G=7.
pub fn epc_numeric(rating: EpcRating) -> i32 {
    rating as i32 + 1
}

/// Ground-truth construction age: an exact year when known, a band otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruthAge {
    ExactYear(i32),
    Band(AgeBand),
}

impl GroundTruthAge {
    pub fn band(self) -> AgeBand {
        match self {
            GroundTruthAge::ExactYear(y) => age_band_for_year(y),
            GroundTruthAge::Band(b) => b,
        }
    }
}

impl fmt::Display for GroundTruthAge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroundTruthAge::ExactYear(y) => write!(f, "{y}"),
            GroundTruthAge::Band(b) => write!(f, "{b}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn year_to_band_examples() {
        assert_eq!(age_band_for_year(2014), AgeBand::Y1990_2020);
        assert_eq!(age_band_for_year(1899), AgeBand::Before1900);
        assert_eq!(age_band_for_year(1900), AgeBand::Y1900_1930);
        assert_eq!(age_band_for_year(2020), AgeBand::Y2020_Now);
        assert_eq!(age_band_for_year(2019), AgeBand::Y1990_2020);
        assert_eq!(age_band_for_year(i32::MIN), AgeBand::Before1900);
        assert_eq!(age_band_for_year(i32::MAX), AgeBand::Y2020_Now);
    }

    #[test]
    fn representative_years() {
        assert_eq!(representative_year(AgeBand::Y1970_1990), 1980);
        assert_eq!(representative_year(AgeBand::Y1900_1930), 1915);
        assert_eq!(representative_year(AgeBand::Before1900), 1890);
        assert_eq!(representative_year(AgeBand::Y2020_Now), 2022);
    }

    #[test]
    fn representative_year_order_follows_band_order() {
        let years: Vec<i32> = AgeBand::ALL.iter().map(|b| representative_year(*b)).collect();
        assert!(years.windows(2).all(|w| w[0] < w[1]));
        for band in AgeBand::ALL {
            assert_eq!(age_band_for_year(representative_year(band)), band);
        }
    }

    #[test]
    fn epc_letters() {
        assert_eq!(epc_numeric(EpcRating::A), 1);
        assert_eq!(epc_numeric(EpcRating::D), 4);
        assert_eq!(epc_numeric(EpcRating::G), 7);
        let nums: Vec<i32> = EpcRating::ALL.iter().map(|r| epc_numeric(*r)).collect();
        assert_eq!(nums, (1..=7).collect::<Vec<_>>());
        assert_eq!("c".parse::<EpcRating>().unwrap(), EpcRating::C);
        assert!("H".parse::<EpcRating>().is_err());
        assert!("AB".parse::<EpcRating>().is_err());
    }

    #[test]
    fn lighting_bounds() {
        assert_eq!(LightingPercent::new(75).unwrap().get(), 75);
        assert!(LightingPercent::new(101).is_err());
        assert!(LightingPercent::new(-1).is_err());
        assert_eq!(
            LightingPercent::new(0).unwrap().option_label().unwrap(),
            "no low energy lighting"
        );
        assert_eq!(LightingPercent::new(75).unwrap().option_label(), None);
        let parsed: Result<LightingPercent, _> = serde_json::from_str("150");
        assert!(parsed.is_err());
    }

    #[test]
    fn energy_estimate_midpoint() {
        let e = EnergyEstimate::range(35.0, 50.0).unwrap();
        assert_eq!(e.point_kwh_m2(), 42.5);
        let p = EnergyEstimate::point(120.0).unwrap();
        assert_eq!((p.low_kwh_m2(), p.high_kwh_m2(), p.point_kwh_m2()), (120.0, 120.0, 120.0));
        assert!(EnergyEstimate::range(50.0, 35.0).is_err());
        assert!(EnergyEstimate::range(-1.0, 3.0).is_err());
        assert!(EnergyEstimate::range(f64::NAN, 3.0).is_err());
    }

    #[test]
    fn ground_truth_age_serde_shape() {
        let y = serde_json::to_string(&GroundTruthAge::ExactYear(2014)).unwrap();
        assert_eq!(y, r#"{"exact_year":2014}"#);
        let b: GroundTruthAge = serde_json::from_str(r#"{"band":"Before1900"}"#).unwrap();
        assert_eq!(b, GroundTruthAge::Band(AgeBand::Before1900));
    }

    proptest! {
        #[test]
        fn every_year_in_exactly_one_band(year in -5000i32..5000) {
            let hits = AgeBand::ALL.iter().filter(|b| b.contains(year)).count();
            prop_assert_eq!(hits, 1);
            prop_assert!(age_band_for_year(year).contains(year));
        }

        #[test]
        fn band_lookup_is_monotone(a in 1700i32..2100, b in 1700i32..2100) {
            if a <= b {
                prop_assert!(age_band_for_year(a) <= age_band_for_year(b));
            }
        }
    }
}
