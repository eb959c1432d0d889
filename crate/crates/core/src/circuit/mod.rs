//! Switched linear network of the converter and of the gate driver.
//!
//! The autotransformer is modelled as a star equivalent: every active winding
//! carries its own leakage inductance and series resistance and meets the
//! others at a common node loaded by the magnetizing inductance. The star
//! node voltage is eliminated algebraically, so the state holds one current
//! per winding and the magnetizing current is their sum.
//!
//! On the DC side the module capacitors form a series string fed by the
//! battery through `r_batt`. Each bridge draws `s * i_wind` from its own
//! capacitor and the load draws `i_load` from whichever tap the PWM stage
//! connects.

mod gate;

pub use gate::{gate_driver_derivatives, GateDriverRates, GateDriverState};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modulation::{BridgePhase, PwmState, TapSelection};
use crate::topology::ConverterConfig;

/// Continuous state of the converter for the active modules.
///
/// Stored as one flat buffer `[v_cap; n] [i_wind; n] [i_load]` so the
/// integrator can work on it directly.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    modules: usize,
    data: Vec<f64>,
}

impl SimState {
    pub fn zeros(modules: usize) -> Self {
        Self {
            modules,
            data: vec![0.0; 2 * modules + 1],
        }
    }

    pub fn from_parts(v_cap: &[f64], i_wind: &[f64], i_load: f64) -> Result<Self> {
        if v_cap.len() != i_wind.len() {
            return Err(Error::Config(format!(
                "state dimension mismatch: {} capacitors, {} windings",
                v_cap.len(),
                i_wind.len()
            )));
        }
        let mut data = Vec::with_capacity(2 * v_cap.len() + 1);
        data.extend_from_slice(v_cap);
        data.extend_from_slice(i_wind);
        data.push(i_load);
        Ok(Self {
            modules: v_cap.len(),
            data,
        })
    }

    /// All capacitors at `v_dc / n`, no current anywhere.
    pub fn balanced(config: &ConverterConfig) -> Self {
        let n = config.active_count();
        let mut s = Self::zeros(n);
        let v = config.v_dc / n as f64;
        s.v_cap_mut().iter_mut().for_each(|x| *x = v);
        s
    }

    pub(crate) fn from_flat(modules: usize, data: &[f64]) -> Self {
        Self {
            modules,
            data: data[..2 * modules + 1].to_vec(),
        }
    }

    pub fn modules(&self) -> usize {
        self.modules
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn v_cap(&self) -> &[f64] {
        &self.data[..self.modules]
    }

    pub fn v_cap_mut(&mut self) -> &mut [f64] {
        &mut self.data[..self.modules]
    }

    pub fn i_wind(&self) -> &[f64] {
        &self.data[self.modules..2 * self.modules]
    }

    pub fn i_wind_mut(&mut self) -> &mut [f64] {
        let n = self.modules;
        &mut self.data[n..2 * n]
    }

    pub fn i_load(&self) -> f64 {
        self.data[2 * self.modules]
    }

    pub fn set_i_load(&mut self, i: f64) {
        self.data[2 * self.modules] = i;
    }

    /// Magnetizing branch current, the sum of all winding currents.
    pub fn i_mag(&self) -> f64 {
        self.i_wind().iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Tap voltages measured from the string bottom: `[0, v0, v0 + v1, ...]`.
    pub fn tap_voltages(&self) -> Vec<f64> {
        tap_voltages(self.v_cap())
    }

    /// Largest minus smallest capacitor voltage.
    pub fn spread(&self) -> f64 {
        spread(self.v_cap())
    }
}

pub(crate) fn tap_voltages(v_cap: &[f64]) -> Vec<f64> {
    let mut taps = Vec::with_capacity(v_cap.len() + 1);
    let mut acc = 0.0;
    taps.push(acc);
    for v in v_cap {
        acc += v;
        taps.push(acc);
    }
    taps
}

pub(crate) fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if values.is_empty() {
        0.0
    } else {
        max - min
    }
}

/// Instantaneous power terms of the network. For a consistent network
/// `source = load + dissipation + stored_rate` holds identically.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerTerms {
    /// Power delivered by the ideal battery EMF.
    pub source: f64,
    /// Power in the load resistance.
    pub load: f64,
    /// All other resistive losses: battery, windings, bridges, tap and PWM devices.
    pub dissipation: f64,
    /// Rate of change of energy stored in every inductor and capacitor.
    pub stored_rate: f64,
}

impl PowerTerms {
    pub fn residual(&self) -> f64 {
        self.source - self.load - self.dissipation - self.stored_rate
    }

    /// Largest magnitude among the four terms.
    pub fn dominant(&self) -> f64 {
        [self.source, self.load, self.dissipation, self.stored_rate]
            .iter()
            .fold(0.0_f64, |a, b| a.max(b.abs()))
    }

    /// Residual relative to the dominant term; zero for an idle network.
    pub fn relative_residual(&self) -> f64 {
        let d = self.dominant();
        if d == 0.0 {
            0.0
        } else {
            self.residual().abs() / d
        }
    }
}

/// Network coefficients for one topology, reused across derivative calls.
#[derive(Debug, Clone)]
pub struct Network {
    modules: usize,
    v_dc: f64,
    r_batt: f64,
    c_module: f64,
    l_leak: f64,
    l_mag: f64,
    r_path: f64,
    l_load: f64,
    r_load: f64,
    r_load_devices: f64,
    star_gain: f64,
}

impl Network {
    pub fn new(config: &ConverterConfig) -> Result<Self> {
        let modules = config.active_count();
        if modules == 0 {
            return Err(Error::SingularNetwork("every module is bypassed".into()));
        }
        if !(config.r_batt > 0.0) {
            return Err(Error::SingularNetwork(
                "r_batt = 0 puts the ideal source directly across the capacitor string".into(),
            ));
        }
        let l_total = config.l_leak + modules as f64 * config.l_mag;
        Ok(Self {
            modules,
            v_dc: config.v_dc,
            r_batt: config.r_batt,
            c_module: config.c_module,
            l_leak: config.l_leak,
            l_mag: config.l_mag,
            r_path: config.winding_path_resistance(),
            l_load: config.l_load,
            r_load: config.r_load,
            r_load_devices: config.r_on_tap + config.r_on_pwm,
            star_gain: config.l_mag / l_total,
        })
    }

    pub fn modules(&self) -> usize {
        self.modules
    }

    /// Length of the flat state buffer.
    pub fn state_len(&self) -> usize {
        2 * self.modules + 1
    }

    /// Evaluates `dy/dt` into `out` for bridge sign `sign` (+1, -1) and the
    /// load attached to tap `tap`. Returns the instantaneous power terms.
    pub(crate) fn eval(&self, y: &[f64], sign: f64, tap: usize, out: &mut [f64]) -> PowerTerms {
        let n = self.modules;
        let (v_cap, rest) = y.split_at(n);
        let (i_wind, rest) = rest.split_at(n);
        let i_load = rest[0];

        let v_string: f64 = v_cap.iter().sum();
        let i_batt = (self.v_dc - v_string) / self.r_batt;
        let v_tap: f64 = v_cap[..tap].iter().sum();

        let r_load_total = self.r_load + self.r_load_devices;
        let di_load = (v_tap - i_load * r_load_total) / self.l_load;

        // Star node: v_s = L_mag * d(sum i)/dt with every winding obeying
        // L_leak di/dt = e - R i - v_s.
        let mut drive_sum = 0.0;
        for m in 0..n {
            drive_sum += sign * v_cap[m] - self.r_path * i_wind[m];
        }
        let v_star = self.star_gain * drive_sum;

        let (dv, rest) = out.split_at_mut(n);
        let (di, rest) = rest.split_at_mut(n);
        let mut stored = 0.0;
        let mut winding_loss = 0.0;
        let mut di_sum = 0.0;
        for m in 0..n {
            let string_current = if m < tap { i_batt - i_load } else { i_batt };
            dv[m] = (string_current - sign * i_wind[m]) / self.c_module;
            let drive = sign * v_cap[m] - self.r_path * i_wind[m];
            di[m] = (drive - v_star) / self.l_leak;
            stored += self.c_module * v_cap[m] * dv[m] + self.l_leak * i_wind[m] * di[m];
            winding_loss += self.r_path * i_wind[m] * i_wind[m];
            di_sum += di[m];
        }
        rest[0] = di_load;
        let i_mag: f64 = i_wind.iter().sum();
        stored += self.l_mag * i_mag * di_sum + self.l_load * i_load * di_load;

        PowerTerms {
            source: self.v_dc * i_batt,
            load: self.r_load * i_load * i_load,
            dissipation: self.r_batt * i_batt * i_batt
                + winding_loss
                + self.r_load_devices * i_load * i_load,
            stored_rate: stored,
        }
    }

    /// Energy held in every capacitor and inductor.
    pub fn stored_energy(&self, state: &SimState) -> f64 {
        let caps: f64 = state
            .v_cap()
            .iter()
            .map(|v| 0.5 * self.c_module * v * v)
            .sum();
        let leak: f64 = state
            .i_wind()
            .iter()
            .map(|i| 0.5 * self.l_leak * i * i)
            .sum();
        let i_mag = state.i_mag();
        caps + leak
            + 0.5 * self.l_mag * i_mag * i_mag
            + 0.5 * self.l_load * state.i_load() * state.i_load()
    }
}

/// Time derivative of `state` for the given switching state, together with
/// the instantaneous power terms.
pub fn derivatives(
    state: &SimState,
    config: &ConverterConfig,
    phase: &BridgePhase,
    sel: &TapSelection,
    pwm_state: PwmState,
) -> Result<(SimState, PowerTerms)> {
    let net = Network::new(config)?;
    if state.modules() != net.modules() {
        return Err(Error::Config(format!(
            "state has {} modules but the configuration has {} active",
            state.modules(),
            net.modules()
        )));
    }
    sel.validate(net.modules() + 1)?;
    let mut out = SimState::zeros(net.modules());
    let tap = sel.conducting_tap(pwm_state);
    let power = net.eval(state.as_slice(), phase.module_sign(0), tap, &mut out.data);
    Ok((out, power))
}

/// A switching device on the output side of the converter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeviceId {
    /// Tap-selector device attached to tap `k`.
    Tap(usize),
    PwmHigh,
    PwmLow,
}

/// Devices the load current flows through: the conducting tap's device and
/// the active PWM device.
pub fn conduction_path_devices(sel: &TapSelection, pwm_state: PwmState) -> Vec<DeviceId> {
    let pwm = match pwm_state {
        PwmState::High => DeviceId::PwmHigh,
        PwmState::Low => DeviceId::PwmLow,
    };
    vec![DeviceId::Tap(sel.conducting_tap(pwm_state)), pwm]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulation::Polarity;

    fn no_load_sel() -> TapSelection {
        TapSelection {
            low_tap: 0,
            high_tap: 0,
            duty: 0.0,
        }
    }

    fn positive() -> BridgePhase {
        BridgePhase::new(Polarity::Positive)
    }

    #[test]
    fn balanced_state_is_quiescent_on_dc_side() {
        let cfg = ConverterConfig::default();
        let state = SimState::balanced(&cfg);
        let (d, _) = derivatives(&state, &cfg, &positive(), &no_load_sel(), PwmState::Low).unwrap();
        for dv in d.v_cap() {
            assert_eq!(*dv, 0.0);
        }
        let first = d.i_wind()[0];
        assert!(first > 0.0);
        for di in d.i_wind() {
            assert!((di - first).abs() < 1e-9 * first.abs());
        }
    }

    #[test]
    fn unforced_network_rests() {
        // v_dc = 0 fails validation but the network equations still apply.
        let cfg = ConverterConfig {
            v_dc: 0.0,
            ..ConverterConfig::default()
        };
        let state = SimState::zeros(4);
        let net = Network::new(&cfg).unwrap();
        let mut out = vec![1.0; net.state_len()];
        let p = net.eval(state.as_slice(), 1.0, 2, &mut out);
        assert!(out.iter().all(|&x| x == 0.0));
        assert_eq!(p.dominant(), 0.0);
    }

    /// Two-mesh view of a two-module star: with equal currents the
    /// differential mode sees the EMF difference across both leakages.
    #[test]
    fn balancing_direction_two_modules() {
        let cfg = ConverterConfig {
            v_dc: 200.0,
            ..ConverterConfig::with_modules(2)
        };
        let net = Network::new(&cfg).unwrap();
        let mut y = SimState::from_parts(&[101.0, 99.0], &[0.0, 0.0], 0.0).unwrap();
        let mut k = vec![0.0; net.state_len()];

        // Independent oracle: differential inductor current
        // d(i0 - i1)/dt = (e0 - e1) / L_leak at zero current.
        net.eval(y.as_slice(), 1.0, 0, &mut k);
        let oracle = (101.0 - 99.0) / cfg.l_leak;
        assert!(((k[2] - k[3]) - oracle).abs() < 1e-9 * oracle);

        // After one winding time constant the circulating current discharges
        // the high capacitor and charges the low one.
        let tau = cfg.l_leak / cfg.winding_path_resistance();
        let steps = 200;
        let h = tau / steps as f64;
        for _ in 0..steps {
            net.eval(y.as_slice(), 1.0, 0, &mut k);
            for (yi, ki) in y.data.iter_mut().zip(&k) {
                *yi += h * ki;
            }
        }
        net.eval(y.as_slice(), 1.0, 0, &mut k);
        assert!(k[0] < k[1], "dv = {:?}", &k[..2]);
        assert!(y.v_cap()[0] < 101.0 && y.v_cap()[1] > 99.0);
    }

    #[test]
    fn power_terms_balance_identically() {
        let cfg = ConverterConfig::default();
        let net = Network::new(&cfg).unwrap();
        let y = SimState::from_parts(&[97.0, 104.0, 99.5, 100.1], &[3.0, -2.0, 0.5, 7.0], 12.0)
            .unwrap();
        let mut k = vec![0.0; net.state_len()];
        for (sign, tap) in [(1.0, 0), (1.0, 2), (-1.0, 3), (-1.0, 4)] {
            let p = net.eval(y.as_slice(), sign, tap, &mut k);
            assert!(p.relative_residual() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn singular_network_rejected() {
        let mut cfg = ConverterConfig::with_modules(2);
        cfg.bypassed_modules = [0, 1].into_iter().collect();
        assert!(matches!(Network::new(&cfg), Err(Error::SingularNetwork(_))));
        let cfg = ConverterConfig {
            r_batt: 0.0,
            ..ConverterConfig::default()
        };
        assert!(Network::new(&cfg).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let cfg = ConverterConfig::default();
        let state = SimState::zeros(3);
        assert!(derivatives(&state, &cfg, &positive(), &no_load_sel(), PwmState::Low).is_err());
    }

    #[test]
    fn conduction_path_examples() {
        let sel = TapSelection {
            low_tap: 2,
            high_tap: 3,
            duty: 0.4,
        };
        assert_eq!(
            conduction_path_devices(&sel, PwmState::High),
            vec![DeviceId::Tap(3), DeviceId::PwmHigh]
        );
        assert_eq!(
            conduction_path_devices(&no_load_sel(), PwmState::Low),
            vec![DeviceId::Tap(0), DeviceId::PwmLow]
        );
    }

    #[test]
    fn conduction_path_has_two_devices_everywhere() {
        for m in 2..=8usize {
            for low in 0..=m {
                for high in [low, low + 1] {
                    if high > m {
                        continue;
                    }
                    for duty in [0.0, 0.3, 1.0] {
                        let sel = TapSelection {
                            low_tap: low,
                            high_tap: high,
                            duty,
                        };
                        if sel.validate(m + 1).is_err() {
                            continue;
                        }
                        for pwm in [PwmState::High, PwmState::Low] {
                            let path = conduction_path_devices(&sel, pwm);
                            assert_eq!(path.len(), 2);
                            let taps = path
                                .iter()
                                .filter(|d| matches!(d, DeviceId::Tap(_)))
                                .count();
                            assert_eq!(taps, 1);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn tap_voltages_accumulate() {
        let s = SimState::from_parts(&[90.0, 110.0, 95.0, 105.0], &[0.0; 4], 0.0).unwrap();
        assert_eq!(s.tap_voltages(), vec![0.0, 90.0, 200.0, 295.0, 400.0]);
        assert_eq!(s.spread(), 20.0);
    }
}
