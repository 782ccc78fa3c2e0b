//! Optional JSON config file, layered under command-line flags.

use std::path::Path;

use loconav::handtrack::KeyframeParams;
use loconav::navigator::NavConfig;
use loconav::wholebody::TrackConfig;
use loconav::world::ScenarioParams;
use serde::{Deserialize, Serialize};

use crate::error::{read_input, CliError};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub nav: NavConfig,
    pub scenario: ScenarioParams,
    pub keyframes: KeyframeParams,
    pub track: TrackConfig,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => serde_json::from_str(&read_input(p)?)
            .map_err(|e| CliError::Input(format!("config {}: {e}", p.display()))),
    }
}

pub fn pretty(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}
