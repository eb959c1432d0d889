//! Scenario files shipped with the crate.

use serde::Deserialize;

use crate::engine::Scenario;
use crate::error::{Error, Result};
use crate::modulation::GateDriverParams;

const SCENARIOS: [(&str, &str); 3] = [
    (
        "prototype-m4",
        include_str!("../scenarios/prototype-m4.json"),
    ),
    (
        "balance-recovery",
        include_str!("../scenarios/balance-recovery.json"),
    ),
    (
        "fault-bypass",
        include_str!("../scenarios/fault-bypass.json"),
    ),
];

const GATE_DRIVES: [(&str, &str); 1] = [(
    "gatedrive-ideal",
    include_str!("../scenarios/gatedrive-ideal.json"),
)];

/// Names of the bundled simulation scenarios.
pub fn names() -> impl Iterator<Item = &'static str> {
    SCENARIOS.iter().map(|(n, _)| *n)
}

/// Loads a bundled simulation scenario by name.
pub fn load(name: &str) -> Result<Scenario> {
    SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("no bundled scenario named `{name}`")))
        .and_then(|(_, text)| Scenario::from_json_str(text))
}

/// Gate-driver run description: circuit parameters, period count and an
/// optional step.
#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateDriveSpec {
    pub params: GateDriverParams,
    #[serde(default = "ten")]
    pub periods: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

fn ten() -> usize {
    10
}

impl GateDriveSpec {
    /// Parses either a full description or bare [`GateDriverParams`], which
    /// run for the default ten periods.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let parse = |e: serde_json::Error| Error::Parse(format!("gate drive: {e}"));
        let value: serde_json::Value = serde_json::from_str(text).map_err(parse)?;
        let spec = if value.get("params").is_some() {
            serde_json::from_value(value).map_err(parse)?
        } else {
            GateDriveSpec {
                params: serde_json::from_value(value).map_err(parse)?,
                periods: ten(),
                dt: None,
            }
        };
        spec.params.validate()?;
        if spec.periods == 0 {
            return Err(Error::field("periods", "must be >= 1"));
        }
        Ok(spec)
    }

    /// Step used when none is given: 1/100 of the resonant transition.
    pub fn step(&self) -> f64 {
        self.dt.unwrap_or(self.params.t_rise / 100.0)
    }
}

/// Loads a bundled gate-driver description by name.
pub fn load_gate_drive(name: &str) -> Result<GateDriveSpec> {
    GATE_DRIVES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("no bundled gate drive named `{name}`")))
        .and_then(|(_, text)| GateDriveSpec::from_json_str(text))
}
