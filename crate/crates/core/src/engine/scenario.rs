use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modulation::GateDriverParams;
use crate::topology::ConverterConfig;

/// Output voltage reference fed to the tap selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Reference {
    /// `offset + amplitude * sin(2 pi f t)`.
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `peak * sin^2(pi f t)`: a unipolar hump repeating every `1 / f`.
    SquaredSine {
        peak: f64,
        frequency: f64,
    },
    Constant {
        volts: f64,
    },
    /// Piecewise-linear through `(t, v)` points, held flat outside them.
    Table {
        points: Vec<(f64, f64)>,
    },
}

impl Reference {
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            Reference::Sine {
                amplitude,
                frequency,
                offset,
            } => offset + amplitude * (TAU * frequency * t).sin(),
            Reference::SquaredSine { peak, frequency } => {
                let s = (PI * frequency * t).sin();
                peak * s * s
            }
            Reference::Constant { volts } => *volts,
            Reference::Table { points } => {
                let i = points.partition_point(|p| p.0 <= t);
                if i == 0 {
                    points[0].1
                } else if i == points.len() {
                    points[points.len() - 1].1
                } else {
                    let (t0, v0) = points[i - 1];
                    let (t1, v1) = points[i];
                    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
                }
            }
        }
    }

    /// Fundamental frequency of a periodic reference.
    pub fn fundamental(&self) -> Option<f64> {
        match self {
            Reference::Sine { frequency, .. } | Reference::SquaredSine { frequency, .. } => {
                Some(*frequency)
            }
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::field(format!("reference.{name}"), "must be finite"))
            }
        };
        match self {
            Reference::Sine {
                amplitude,
                frequency,
                offset,
            } => {
                finite("amplitude", *amplitude)?;
                finite("offset", *offset)?;
                if !(*frequency > 0.0 && frequency.is_finite()) {
                    return Err(Error::field("reference.frequency", "must be > 0"));
                }
            }
            Reference::SquaredSine { peak, frequency } => {
                finite("peak", *peak)?;
                if !(*frequency > 0.0 && frequency.is_finite()) {
                    return Err(Error::field("reference.frequency", "must be > 0"));
                }
            }
            Reference::Constant { volts } => finite("volts", *volts)?,
            Reference::Table { points } => {
                if points.is_empty() {
                    return Err(Error::field("reference.points", "needs at least one point"));
                }
                if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
                    return Err(Error::field("reference.points", "must be finite"));
                }
                if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(Error::field(
                        "reference.points",
                        "times must be strictly increasing",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Module `module` (physical index) is bypassed at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEvent {
    pub time: f64,
    pub module: usize,
}

/// One simulation run: plant, reference, horizon and recording options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub config: ConverterConfig,
    pub reference: Reference,
    pub duration: f64,
    /// Integration step; defaults to 1 / (200 f_bridge).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "one")]
    pub record_decimation: usize,
    /// Initial capacitor voltage per physical module; bypassed entries are
    /// ignored. Balanced when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_v_cap: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fault_events: Vec<FaultEvent>,
    /// Gate driver used for the energy figures in the run report; derived
    /// from `f_bridge` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_driver: Option<GateDriverParams>,
}

fn one() -> usize {
    1
}

/// Smallest number of integration steps per bridge period.
pub const MIN_STEPS_PER_BRIDGE_PERIOD: f64 = 50.0;
/// Default number of integration steps per bridge period.
pub const DEFAULT_STEPS_PER_BRIDGE_PERIOD: f64 = 200.0;

impl Scenario {
    pub fn new(config: ConverterConfig, reference: Reference, duration: f64) -> Self {
        Self {
            config,
            reference,
            duration,
            dt: None,
            record_decimation: 1,
            initial_v_cap: None,
            fault_events: Vec::new(),
            gate_driver: None,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Integration step actually used.
    pub fn step(&self) -> f64 {
        self.dt
            .unwrap_or(1.0 / (DEFAULT_STEPS_PER_BRIDGE_PERIOD * self.config.f_bridge))
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.reference.validate()?;
        let dt = self.step();
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::field("dt", "must be finite and > 0"));
        }
        let max_dt = 1.0 / (MIN_STEPS_PER_BRIDGE_PERIOD * self.config.f_bridge);
        if dt > max_dt * (1.0 + 1e-9) {
            return Err(Error::field(
                "dt",
                format!("{dt:e} s exceeds 1/(50 f_bridge) = {max_dt:e} s"),
            ));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::field("duration", "must be finite and > 0"));
        }
        if self.duration < dt {
            return Err(Error::field(
                "duration",
                "shorter than one integration step",
            ));
        }
        if self.record_decimation == 0 {
            return Err(Error::field("record_decimation", "must be >= 1"));
        }
        if let Some(v) = &self.initial_v_cap {
            if v.len() != self.config.module_count {
                return Err(Error::field(
                    "initial_v_cap",
                    format!(
                        "expected {} values, got {}",
                        self.config.module_count,
                        v.len()
                    ),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::field("initial_v_cap", "must be finite"));
            }
        }
        let mut bypassed = self.config.bypassed_modules.clone();
        let mut events = self.fault_events.clone();
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        for e in &events {
            if !(e.time.is_finite() && e.time >= 0.0) {
                return Err(Error::field("fault_events.time", "must be finite and >= 0"));
            }
            if e.module >= self.config.module_count || !bypassed.insert(e.module) {
                return Err(Error::field(
                    "fault_events.module",
                    format!("module {} is out of range or already bypassed", e.module),
                ));
            }
            if bypassed.len() >= self.config.module_count {
                return Err(Error::field(
                    "fault_events",
                    "events would bypass every module",
                ));
            }
        }
        if let Some(g) = &self.gate_driver {
            g.validate()?;
        }
        Ok(())
    }
}
