//! Post-processing of simulated waveforms: THD, tracking error, conduction
//! loss, balancing metrics, and the run report that collects them.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::engine::{PeriodSample, Scenario, SwitchingGrid, Waveform};
use crate::error::{Error, Result};
use crate::topology::ConverterConfig;

/// Device switching events (individual device state changes) during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchingEvents {
    pub bridge: u64,
    pub tap: u64,
    pub pwm: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GateEnergy {
    pub delivered: f64,
    pub dissipated: f64,
}

/// Integrated energy flows over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyAccount {
    pub source: f64,
    pub load: f64,
    pub dissipated: f64,
    pub stored_initial: f64,
    pub stored_final: f64,
    /// Stored energy removed with bypassed modules.
    pub fault_discarded: f64,
    /// `|source - load - dissipated - (stored_final - stored_initial + fault_discarded)|`
    /// relative to the largest of those flows.
    pub closure_error: f64,
}

impl EnergyAccount {
    pub fn new(
        source: f64,
        load: f64,
        dissipated: f64,
        stored_initial: f64,
        stored_final: f64,
        fault_discarded: f64,
    ) -> Self {
        let stored_change = stored_final - stored_initial + fault_discarded;
        let residual = source - load - dissipated - stored_change;
        let scale = [source, load, dissipated, stored_change]
            .iter()
            .fold(0.0_f64, |a, b| a.max(b.abs()));
        Self {
            source,
            load,
            dissipated,
            stored_initial,
            stored_final,
            fault_discarded,
            closure_error: if scale > 0.0 {
                residual.abs() / scale
            } else {
                0.0
            },
        }
    }
}

/// Event tallies accumulated by the engine.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunCounters {
    pub bridge: u64,
    pub tap: u64,
    pub pwm: u64,
    pub tap_transitions: u64,
    pub max_tap_toggles: usize,
    pub max_power_residual: f64,
}

impl RunCounters {
    pub(crate) fn record_tap_transition(&mut self, toggles: usize) {
        if toggles > 0 {
            self.tap += toggles as u64;
            self.tap_transitions += 1;
            self.max_tap_toggles = self.max_tap_toggles.max(toggles);
        }
    }
}

/// Derived metrics of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// THD of `v_out` at the reference fundamental; absent for aperiodic
    /// references or runs shorter than one reference period.
    pub thd: Option<f64>,
    /// RMS of the PWM-period average of `v_out` minus `v_ref`.
    pub rms_tracking_error: Option<f64>,
    pub capacitor_spread_final: f64,
    /// First bridge-period sample with spread below 1 % of `v_dc`; absent
    /// if the run never settles.
    pub balance_settling_time: Option<f64>,
    pub conduction_loss: f64,
    pub switching_event_counts: SwitchingEvents,
    pub gate_energy: Option<GateEnergy>,
    pub energy: EnergyAccount,
    /// Worst instantaneous power-balance residual over all steps, relative
    /// to the dominant power term.
    pub max_power_residual: f64,
    pub tap_transitions: u64,
    pub max_tap_toggles: usize,
    /// Tap voltages averaged over the last complete bridge period.
    pub final_tap_voltages: Vec<f64>,
    pub duration: f64,
    pub dt: f64,
    pub steps: u64,
    pub f_bridge: f64,
    pub f_pwm: f64,
    pub f_tap: f64,
}

impl RunReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn build_report(
    scenario: &Scenario,
    waveform: &Waveform,
    samples: &[PeriodSample],
    final_config: &ConverterConfig,
    grid: &SwitchingGrid,
    dt: f64,
    steps: usize,
    counters: RunCounters,
    energy: EnergyAccount,
    gate_energy: Option<GateEnergy>,
) -> RunReport {
    let v_out = waveform.channel("v_out").unwrap_or(&[]);
    let v_ref = waveform.channel("v_ref").unwrap_or(&[]);
    let sample_dt = waveform.sample_interval().unwrap_or(dt);
    let f_pwm = grid.f_pwm(dt);

    let thd = scenario
        .reference
        .fundamental()
        .and_then(|f0| thd(v_out, sample_dt, f0).ok());
    let rms_tracking_error = tracking_error(v_out, v_ref, sample_dt, f_pwm).ok();

    let threshold = 0.01 * scenario.config.v_dc;
    let final_tap_voltages = samples
        .iter()
        .rev()
        .find(|s| !s.mean_taps.is_empty())
        .map(|s| s.mean_taps.clone())
        .unwrap_or_default();
    let capacitor_spread_final = samples.last().map(|s| s.spread).unwrap_or(0.0);

    RunReport {
        thd,
        rms_tracking_error,
        capacitor_spread_final,
        balance_settling_time: settling_time(samples, threshold),
        conduction_loss: conduction_loss(waveform, final_config).unwrap_or(0.0),
        switching_event_counts: SwitchingEvents {
            bridge: counters.bridge,
            tap: counters.tap,
            pwm: counters.pwm,
        },
        gate_energy,
        energy,
        max_power_residual: counters.max_power_residual,
        tap_transitions: counters.tap_transitions,
        max_tap_toggles: counters.max_tap_toggles,
        final_tap_voltages,
        duration: steps as f64 * dt,
        dt,
        steps: steps as u64,
        f_bridge: grid.f_bridge(dt),
        f_pwm,
        f_tap: grid.f_tap(dt),
    }
}

/// Total harmonic distortion of a uniformly sampled signal relative to its
/// fundamental amplitude, with harmonics up to Nyquist.
///
/// Uses the trailing whole number of fundamental periods so every harmonic
/// falls on a DFT bin.
pub fn thd(signal: &[f64], sample_interval: f64, f0: f64) -> Result<f64> {
    if !(sample_interval > 0.0) || !(f0 > 0.0) {
        return Err(Error::Signal(
            "sample interval and f0 must be positive".into(),
        ));
    }
    let fs = 1.0 / sample_interval;
    let nyquist = fs / 2.0;
    if f0 >= nyquist {
        return Err(Error::Signal(format!(
            "fundamental {f0} Hz is not below Nyquist {nyquist} Hz"
        )));
    }
    let samples_per_period = fs / f0;
    let periods = ((signal.len() as f64 + 1e-6) / samples_per_period).floor() as usize;
    if periods == 0 {
        return Err(Error::Signal(
            "signal shorter than one fundamental period".into(),
        ));
    }
    let len = ((periods as f64 * samples_per_period).round() as usize).min(signal.len());
    let window = &signal[signal.len() - len..];

    let mut buf: Vec<Complex<f64>> = window.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);

    // Mean-square contribution of bin k of a real signal.
    let power = |k: usize| {
        let m = buf[k].norm_sqr() / (len as f64 * len as f64);
        if 2 * k == len {
            m
        } else {
            2.0 * m
        }
    };
    let fundamental = power(periods);
    if fundamental == 0.0 {
        return Err(Error::Signal("signal has no fundamental component".into()));
    }
    let max_harmonic = (nyquist / f0).floor() as usize;
    let harmonics: f64 = (2..=max_harmonic)
        .map(|h| h * periods)
        .take_while(|&k| 2 * k <= len)
        .map(power)
        .sum();
    Ok((harmonics / fundamental).sqrt())
}

/// RMS difference between the one-PWM-period moving average of `v_out` and
/// `v_ref`.
///
/// The rectangular window is centred on each sample. Samples in the first
/// PWM period, and those whose window would run past either end, are
/// excluded.
pub fn tracking_error(
    v_out: &[f64],
    v_ref: &[f64],
    sample_interval: f64,
    f_pwm: f64,
) -> Result<f64> {
    if v_out.len() != v_ref.len() {
        return Err(Error::Signal("v_out and v_ref lengths differ".into()));
    }
    if !(sample_interval > 0.0) || !(f_pwm > 0.0) {
        return Err(Error::Signal(
            "sample interval and f_pwm must be positive".into(),
        ));
    }
    let window = ((1.0 / (f_pwm * sample_interval)).round() as usize).max(1);
    let mut prefix = Vec::with_capacity(v_out.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in v_out {
        acc += v;
        prefix.push(acc);
    }
    let half = window / 2;
    let first = window.max(half);
    if first + window - half > v_out.len() {
        return Err(Error::Signal(
            "signal too short for a one-period moving average".into(),
        ));
    }
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for i in first..=(v_out.len() - (window - half)) {
        let start = i - half;
        let avg = (prefix[start + window] - prefix[start]) / window as f64;
        // An even window is centred half a sample before `i`.
        let target = if window.is_multiple_of(2) {
            0.5 * (v_ref[i - 1] + v_ref[i])
        } else {
            v_ref[i]
        };
        let e = avg - target;
        sum_sq += e * e;
        count += 1;
    }
    Ok((sum_sq / count as f64).sqrt())
}

/// Conduction loss over the waveform: the load current through one tap and
/// one PWM device, and every winding current through its winding and two
/// bridge devices. Trapezoidal in time.
pub fn conduction_loss(waveform: &Waveform, config: &ConverterConfig) -> Result<f64> {
    let time = waveform.time();
    let i_load = waveform.require("i_load")?;
    let windings: Vec<&[f64]> = (0..config.module_count)
        .map(|m| waveform.require(&format!("i_wind_{m}")))
        .collect::<Result<_>>()?;
    let r_load_path = config.r_on_tap + config.r_on_pwm;
    let r_wind = config.winding_path_resistance();
    let power = |k: usize| {
        let wind: f64 = windings.iter().map(|w| w[k] * w[k]).sum();
        i_load[k] * i_load[k] * r_load_path + wind * r_wind
    };
    Ok(time
        .windows(2)
        .enumerate()
        .map(|(k, t)| 0.5 * (t[1] - t[0]) * (power(k) + power(k + 1)))
        .sum())
}

/// First sample time with spread below `threshold`.
pub fn settling_time(samples: &[PeriodSample], threshold: f64) -> Option<f64> {
    samples
        .iter()
        .find(|s| s.spread < threshold)
        .map(|s| s.time)
}

/// True when the spread never grows by more than `tolerance` between
/// consecutive samples.
pub fn spread_is_monotone(samples: &[PeriodSample], tolerance: f64) -> bool {
    samples
        .windows(2)
        .all(|w| w[1].spread <= w[0].spread + tolerance)
}

pub fn rms(signal: &[f64]) -> f64 {
    if signal.is_empty() {
        return 0.0;
    }
    (signal.iter().map(|x| x * x).sum::<f64>() / signal.len() as f64).sqrt()
}
