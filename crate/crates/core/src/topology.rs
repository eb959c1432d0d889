//! Structural parameterization of the converter: module string, tap ladder,
//! switch inventory and fault bypass.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electrical parameterization of an M-module DC-autotransformer with its
/// tap selector, PWM stage, RL load and battery source. SI units throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConverterConfig {
    /// Number of H-bridge modules in the DC string.
    pub module_count: usize,
    /// Source voltage across the whole string.
    pub v_dc: f64,
    /// DC-link capacitance of each module.
    pub c_module: f64,
    /// Leakage inductance per winding in the star-equivalent transformer.
    pub l_leak: f64,
    /// Magnetizing inductance at the star point.
    pub l_mag: f64,
    pub r_winding: f64,
    pub r_on_bridge: f64,
    pub r_on_tap: f64,
    pub r_on_pwm: f64,
    pub r_batt: f64,
    pub r_load: f64,
    pub l_load: f64,
    /// Bridge and gate-driver switching frequency.
    pub f_bridge: f64,
    /// PWM carrier frequency.
    pub f_pwm: f64,
    /// Tap-selector decision rate.
    pub f_tap: f64,
    /// Physical indices of modules whose DC link is shorted and winding opened.
    pub bypassed_modules: BTreeSet<usize>,
}

impl Default for ConverterConfig {
    fn default() -> Self {
        Self {
            module_count: 4,
            v_dc: 400.0,
            c_module: 10e-6,
            l_leak: 10e-9,
            l_mag: 100e-6,
            r_winding: 10e-3,
            r_on_bridge: 10e-3,
            r_on_tap: 10e-3,
            r_on_pwm: 10e-3,
            r_batt: 50e-3,
            r_load: 10.0,
            l_load: 1e-3,
            f_bridge: 110e3,
            f_pwm: 10e3,
            f_tap: 10e3,
            bypassed_modules: BTreeSet::new(),
        }
    }
}

/// Device counts per switch group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchInventory {
    pub bridge: usize,
    pub tap: usize,
    pub pwm: usize,
}

impl SwitchInventory {
    pub fn total(&self) -> usize {
        self.bridge + self.tap + self.pwm
    }
}

impl ConverterConfig {
    /// Configuration with `module_count` modules and default values elsewhere.
    pub fn with_modules(module_count: usize) -> Self {
        Self {
            module_count,
            ..Self::default()
        }
    }

    /// Checks every field invariant.
    pub fn validate(&self) -> Result<()> {
        if self.module_count == 0 {
            return Err(Error::field("module_count", "must be at least 1"));
        }
        let positive = [
            ("v_dc", self.v_dc),
            ("c_module", self.c_module),
            ("l_leak", self.l_leak),
            ("l_mag", self.l_mag),
            ("l_load", self.l_load),
            ("f_bridge", self.f_bridge),
            ("f_pwm", self.f_pwm),
            ("f_tap", self.f_tap),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::field(
                    name,
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        let non_negative = [
            ("r_winding", self.r_winding),
            ("r_on_bridge", self.r_on_bridge),
            ("r_on_tap", self.r_on_tap),
            ("r_on_pwm", self.r_on_pwm),
            ("r_batt", self.r_batt),
            ("r_load", self.r_load),
        ];
        for (name, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::field(
                    name,
                    format!("must be finite and >= 0, got {value}"),
                ));
            }
        }
        if self.f_tap > self.f_pwm {
            return Err(Error::field("f_tap", "must not exceed f_pwm"));
        }
        if self.f_pwm > self.f_bridge {
            return Err(Error::field("f_pwm", "must not exceed f_bridge"));
        }
        if let Some(&m) = self
            .bypassed_modules
            .iter()
            .find(|&&m| m >= self.module_count)
        {
            return Err(Error::field(
                "bypassed_modules",
                format!("module index {m} out of range 0..{}", self.module_count),
            ));
        }
        if self.bypassed_modules.len() >= self.module_count {
            return Err(Error::field(
                "bypassed_modules",
                "at least one module must remain active",
            ));
        }
        Ok(())
    }

    /// Physical indices of the modules still in the string, bottom to top.
    pub fn active_modules(&self) -> Vec<usize> {
        (0..self.module_count)
            .filter(|m| !self.bypassed_modules.contains(m))
            .collect()
    }

    pub fn active_count(&self) -> usize {
        self.module_count - self.bypassed_modules.len()
    }

    /// Series resistance seen by one winding current: winding copper plus
    /// the two conducting bridge devices.
    pub fn winding_path_resistance(&self) -> f64 {
        self.r_winding + 2.0 * self.r_on_bridge
    }

    /// Resistance of the load loop: load, one tap device and one PWM device.
    pub fn load_path_resistance(&self) -> f64 {
        self.r_load + self.r_on_tap + self.r_on_pwm
    }
}

/// Evenly spaced tap voltages `[0, V/Ma, ..., V]` for the active modules.
pub fn nominal_tap_ladder(config: &ConverterConfig) -> Result<Vec<f64>> {
    let active = config.active_count();
    if config.module_count == 0 || active == 0 {
        return Err(Error::Config("no active modules".into()));
    }
    let step = config.v_dc / active as f64;
    let mut ladder: Vec<f64> = (0..=active).map(|k| k as f64 * step).collect();
    // Pin the top tap to the source voltage exactly.
    ladder[active] = config.v_dc;
    Ok(ladder)
}

/// Marks `module` as bypassed: DC terminals shorted, winding opened.
pub fn apply_fault_bypass(config: &ConverterConfig, module: usize) -> Result<ConverterConfig> {
    if module >= config.module_count {
        return Err(Error::field(
            "module",
            format!("index {module} out of range 0..{}", config.module_count),
        ));
    }
    if config.bypassed_modules.contains(&module) {
        return Err(Error::field(
            "module",
            format!("module {module} is already bypassed"),
        ));
    }
    if config.active_count() < 2 {
        return Err(Error::Config("cannot bypass the last active module".into()));
    }
    let mut next = config.clone();
    next.bypassed_modules.insert(module);
    Ok(next)
}

/// Switch counts: 4 per active bridge, `2M - 2` in the tap selector (from the
/// as-built module count) and 2 in the PWM stage.
pub fn switch_inventory(config: &ConverterConfig) -> SwitchInventory {
    SwitchInventory {
        bridge: 4 * config.active_count(),
        tap: (2 * config.module_count).saturating_sub(2),
        pwm: 2,
    }
}
