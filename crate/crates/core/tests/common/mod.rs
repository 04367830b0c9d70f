#![allow(dead_code)]

use std::path::{Path, PathBuf};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn responses() -> PathBuf {
    fixtures().join("responses")
}

/// Copy a directory tree (fixtures are small, flat two-level trees).
pub fn copy_tree(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

/// Oracle for the heating rules, written against string flags "Y"/"N" and
/// kept deliberately literal: one statement per clause of the rule table.
pub mod oracle {
    pub fn main_heating(air_vent: &str, radiators: &str, water_filled: &str, panel: &str, storage: &str) -> &'static str {
        let mut main_heating = "";
        if radiators == "Y" && water_filled == "Y" {
            main_heating = "water rads";
        } else if panel == "Y" {
            main_heating = "electric panels";
        } else if storage == "Y" {
            main_heating = "electric storage";
        }
        if air_vent == "N" && radiators == "N" && panel == "N" && storage == "N" {
            main_heating = "underfloor";
        }
        if air_vent == "Y" && radiators == "N" && panel == "N" && storage == "N" {
            main_heating = "warm air";
        }
        main_heating
    }

    /// `building_age` is the first year of the band, `None` for the open-ended oldest band.
    pub fn energy_source(
        building_age: Option<i32>,
        building_type: &str,
        water_filled: &str,
        panel: &str,
        storage: &str,
        heating_type: &str,
    ) -> &'static str {
        if building_age.is_some_and(|a| a >= 1970) && building_type == "> 5 units" && panel == "N" && storage == "N" {
            "community"
        } else if water_filled == "Y" {
            "gas"
        } else if heating_type == "underfloor" || panel == "Y" || storage == "Y" {
            "electric"
        } else {
            ""
        }
    }

    /// Band start years, in band order.
    pub const BAND_STARTS: [Option<i32>; 7] =
        [None, Some(1900), Some(1930), Some(1950), Some(1970), Some(1990), Some(2020)];

    /// Building-type labels, in option order.
    pub const BUILDING_TYPES: [&str; 5] = ["detached", "attached", "2-4 units", "> 5 units", "mobile home"];

    pub fn yn(b: bool) -> &'static str {
        if b {
            "Y"
        } else {
            "N"
        }
    }
}
