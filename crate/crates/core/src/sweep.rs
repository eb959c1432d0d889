//! Parameter sweeps: one independent simulation per value.
//!
//! With the `parallel` feature (on by default) runs are distributed over the
//! rayon thread pool; without it they run one after another. Results come
//! back in input order either way, and each run is bit-identical to running
//! it alone.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use crate::analysis::RunReport;
use crate::engine::{simulate, Scenario};
use crate::error::{Error, Result};

/// Scalar parameters of [`Scenario`] that a sweep may set.
const SCENARIO_FIELDS: [&str; 3] = ["duration", "dt", "record_decimation"];

/// Synthetic parameter: initial capacitor spread as a fraction of the
/// nominal module voltage, spread linearly across the modules with the mean
/// kept at `v_dc / M`.
pub const INITIAL_UNBALANCE: &str = "initial_unbalance";

/// One completed sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub value: f64,
    pub report: RunReport,
}

/// Builds the scenario for one sweep point.
///
/// `parameter` is a `ConverterConfig` field (`module_count`, `v_dc`, ...), a
/// scalar scenario field (`duration`, `dt`, `record_decimation`), a field of
/// the reference written as `reference.<field>`, or `initial_unbalance`.
pub fn apply_parameter(template: &Scenario, parameter: &str, value: f64) -> Result<Scenario> {
    if !value.is_finite() {
        return Err(Error::field(parameter, "sweep value must be finite"));
    }
    if parameter == INITIAL_UNBALANCE {
        let mut s = template.clone();
        s.initial_v_cap = Some(unbalanced_caps(&s, value));
        s.validate()?;
        return Ok(s);
    }

    let mut json = serde_json::to_value(template)?;
    let number = json_number(value);
    let root = json.as_object_mut().expect("scenario is an object");
    if let Some(field) = parameter.strip_prefix("reference.") {
        let reference = root
            .get_mut("reference")
            .and_then(Value::as_object_mut)
            .expect("reference is an object");
        if field == "type" || !reference.contains_key(field) {
            return Err(unknown(parameter));
        }
        reference.insert(field.to_string(), number);
    } else if SCENARIO_FIELDS.contains(&parameter) {
        root.insert(parameter.to_string(), number);
    } else {
        let config = root
            .get_mut("config")
            .and_then(Value::as_object_mut)
            .expect("config is an object");
        if parameter == "bypassed_modules" || !config.contains_key(parameter) {
            return Err(unknown(parameter));
        }
        config.insert(parameter.to_string(), number);
    }
    let scenario: Scenario = serde_json::from_value(json)
        .map_err(|e| Error::field(parameter, format!("cannot take value {value}: {e}")))?;
    scenario.validate()?;
    Ok(scenario)
}

fn unknown(parameter: &str) -> Error {
    Error::field(
        "parameter",
        format!("unknown sweep parameter `{parameter}`"),
    )
}

fn json_number(value: f64) -> Value {
    if value.fract() == 0.0 && value.abs() < 9.0e15 {
        Value::Number(Number::from(value as i64))
    } else {
        Number::from_f64(value)
            .map(Value::Number)
            .unwrap_or(Value::Null)
    }
}

fn unbalanced_caps(s: &Scenario, fraction: f64) -> Vec<f64> {
    let m = s.config.module_count;
    let nominal = s.config.v_dc / s.config.active_count() as f64;
    let active = s.config.active_modules();
    let mut caps = vec![0.0; m];
    let last = active.len().saturating_sub(1).max(1) as f64;
    for (k, &module) in active.iter().enumerate() {
        let offset = if active.len() == 1 {
            0.0
        } else {
            k as f64 / last - 0.5
        };
        caps[module] = nominal * (1.0 + fraction * offset);
    }
    caps
}

/// Prepares every sweep point, failing before any simulation runs.
pub fn prepare(template: &Scenario, parameter: &str, values: &[f64]) -> Result<Vec<Scenario>> {
    if values.is_empty() {
        return Err(Error::field("values", "sweep needs at least one value"));
    }
    values
        .iter()
        .map(|&v| apply_parameter(template, parameter, v))
        .collect()
}

/// Runs the sweep, in parallel when the `parallel` feature is enabled.
pub fn run_sweep(template: &Scenario, parameter: &str, values: &[f64]) -> Result<Vec<SweepRun>> {
    let scenarios = prepare(template, parameter, values)?;
    run_scenarios(&scenarios)?
        .into_iter()
        .zip(values)
        .map(|(report, &value)| Ok(SweepRun { value, report }))
        .collect()
}

/// Runs the sweep strictly one scenario at a time.
pub fn run_sweep_sequential(
    template: &Scenario,
    parameter: &str,
    values: &[f64],
) -> Result<Vec<SweepRun>> {
    let scenarios = prepare(template, parameter, values)?;
    run_scenarios_sequential(&scenarios)?
        .into_iter()
        .zip(values)
        .map(|(report, &value)| Ok(SweepRun { value, report }))
        .collect()
}

/// Simulates independent scenarios, returning reports in input order.
#[cfg(feature = "parallel")]
pub fn run_scenarios(scenarios: &[Scenario]) -> Result<Vec<RunReport>> {
    use rayon::prelude::*;
    scenarios
        .par_iter()
        .map(|s| simulate(s).map(|out| out.report))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_scenarios(scenarios: &[Scenario]) -> Result<Vec<RunReport>> {
    run_scenarios_sequential(scenarios)
}

pub fn run_scenarios_sequential(scenarios: &[Scenario]) -> Result<Vec<RunReport>> {
    scenarios
        .iter()
        .map(|s| simulate(s).map(|out| out.report))
        .collect()
}

/// Writes `value,thd,rms_tracking_error,balance_settling_time,capacitor_spread_final`
/// with one row per run; absent metrics are left empty.
pub fn write_summary_csv<W: Write>(runs: &[SweepRun], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record([
        "value",
        "thd",
        "rms_tracking_error",
        "balance_settling_time",
        "capacitor_spread_final",
    ])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for run in runs {
        let r = &run.report;
        w.write_record([
            run.value.to_string(),
            opt(r.thd),
            opt(r.rms_tracking_error),
            opt(r.balance_settling_time),
            r.capacitor_spread_final.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
