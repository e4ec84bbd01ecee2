//! Scenarios shipped with the library.

use crate::scenario::{parse_scenario_str, Scenario};

/// 2 x 2 km at 10 m, three sites with three beams each, 50 users.
pub const REFERENCE_TOML: &str = include_str!("../scenarios/reference.toml");

/// A single narrow beam with a static user cluster off its boresight.
pub const OFF_BORESIGHT_TOML: &str = include_str!("../scenarios/off_boresight.toml");

pub fn reference() -> Scenario {
    parse_scenario_str(REFERENCE_TOML).expect("shipped scenario is valid")
}

pub fn off_boresight() -> Scenario {
    parse_scenario_str(OFF_BORESIGHT_TOML).expect("shipped scenario is valid")
}

/// Looks up a shipped scenario by name.
pub fn by_name(name: &str) -> Option<Scenario> {
    match name {
        "reference" => Some(reference()),
        "off-boresight" | "off_boresight" => Some(off_boresight()),
        _ => None,
    }
}
