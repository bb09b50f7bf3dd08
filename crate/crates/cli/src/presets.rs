//! Scenarios bundled with the binary, addressed as `preset:<name>`.

use crate::error::{CliError, CliResult};
use crate::scenario::Scenario;

pub const NAMES: [&str; 3] = ["ars_reference", "oracle_scaled", "static"];

pub fn text(name: &str) -> CliResult<&'static str> {
    match name {
        "ars_reference" => Ok(include_str!("../presets/ars_reference.toml")),
        "oracle_scaled" => Ok(include_str!("../presets/oracle_scaled.toml")),
        "static" => Ok(include_str!("../presets/static.toml")),
        other => Err(CliError::Usage(format!("unknown preset `{other}`; available: {}", NAMES.join(", ")))),
    }
}

/// Parses a bundled preset, ignoring environment overrides.
pub fn load(name: &str) -> CliResult<Scenario> {
    Scenario::parse(text(name)?, &format!("preset:{name}"))
}
