//! Domain-knowledge rules turning heating observations into a heating type
//! and an energy source.
//!
//! The clause order is significant and mirrors the rule table: an if/elif
//! chain for radiators, panels and storage heaters, followed by two
//! standalone checks for underfloor and warm-air heating. Gaps in the
//! table yield `Unknown` rather than a guessed default.

use crate::types::{AgeBand, BuildingType, EnergySource, HeatingObservation, HeatingType};

pub fn infer_heating_type(obs: HeatingObservation) -> HeatingType {
    let mut heating = HeatingType::Unknown;

    if obs.radiators && obs.water_filled {
        heating = HeatingType::WaterRads;
    } else if obs.panel {
        heating = HeatingType::ElectricPanels;
    } else if obs.storage {
        heating = HeatingType::ElectricStorage;
    }

    let no_emitters = !obs.radiators && !obs.panel && !obs.storage;
    if !obs.air_vent && no_emitters {
        heating = HeatingType::Underfloor;
    }
    if obs.air_vent && no_emitters {
        heating = HeatingType::WarmAir;
    }

    heating
}

/// True for bands that start in or after 1970.
fn built_from_1970(band: AgeBand) -> bool {
    band.start_year().is_some_and(|y| y >= 1970)
}

pub fn infer_energy_source(
    band: AgeBand,
    building: BuildingType,
    obs: HeatingObservation,
    heating: HeatingType,
) -> EnergySource {
    if built_from_1970(band) && building == BuildingType::Units5Plus && !obs.panel && !obs.storage {
        EnergySource::Community
    } else if obs.water_filled {
        EnergySource::Gas
    } else if heating == HeatingType::Underfloor || obs.panel || obs.storage {
        EnergySource::Electric
    } else {
        EnergySource::Unknown
    }
}

/// Apply both rules in sequence.
pub fn infer_heating(
    band: AgeBand,
    building: BuildingType,
    obs: HeatingObservation,
) -> (HeatingType, EnergySource) {
    let heating = infer_heating_type(obs);
    (heating, infer_energy_source(band, building, obs, heating))
}
