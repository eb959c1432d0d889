//! Fixed-step time-domain simulation of the converter.
//!
//! The plant is integrated with classical RK4 on a uniform grid. Bridge
//! half-periods, PWM periods and tap decisions are snapped to whole numbers
//! of steps so every bridge and tap event lands on a step boundary. The PWM
//! falling edge inside a period is resolved exactly by splitting the step it
//! falls in.

mod gate;
mod scenario;
mod waveform;

pub use gate::{run_gate_driver, GateDriverRun, GateEnergyReport, GatePeriodEnergy};
pub use scenario::{
    FaultEvent, Reference, Scenario, DEFAULT_STEPS_PER_BRIDGE_PERIOD, MIN_STEPS_PER_BRIDGE_PERIOD,
};
pub use waveform::Waveform;

use serde::{Deserialize, Serialize};

use crate::analysis::{self, EnergyAccount, GateEnergy, RunCounters, RunReport};
use crate::circuit::{self, Network, SimState};
use crate::error::{Error, Result};
use crate::integrator::Rk4;
use crate::modulation::{
    select_taps, tap_transition_toggle_count, GateDriverParams, Polarity, PwmState, TapSelection,
};
use crate::topology::{apply_fault_bypass, nominal_tap_ladder, ConverterConfig};

/// Switching periods expressed in whole integration steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchingGrid {
    pub half_bridge_steps: usize,
    pub pwm_steps: usize,
    /// Always a multiple of `pwm_steps`.
    pub tap_steps: usize,
}

impl SwitchingGrid {
    pub fn new(config: &ConverterConfig, dt: f64) -> Self {
        let snap = |period: f64| ((period / dt).round() as usize).max(1);
        let half_bridge_steps = snap(0.5 / config.f_bridge);
        let pwm_steps = snap(1.0 / config.f_pwm);
        let tap_periods = ((1.0 / config.f_tap) / (pwm_steps as f64 * dt))
            .round()
            .max(1.0);
        Self {
            half_bridge_steps,
            pwm_steps,
            tap_steps: tap_periods as usize * pwm_steps,
        }
    }

    pub fn bridge_period_steps(&self) -> usize {
        2 * self.half_bridge_steps
    }

    pub fn f_bridge(&self, dt: f64) -> f64 {
        1.0 / (self.bridge_period_steps() as f64 * dt)
    }

    pub fn f_pwm(&self, dt: f64) -> f64 {
        1.0 / (self.pwm_steps as f64 * dt)
    }

    pub fn f_tap(&self, dt: f64) -> f64 {
        1.0 / (self.tap_steps as f64 * dt)
    }

    pub fn polarity(&self, step: usize) -> Polarity {
        if (step / self.half_bridge_steps).is_multiple_of(2) {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }
}

/// State snapshot taken at the start of every bridge period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSample {
    pub time: f64,
    /// Capacitor spread of the active modules at this instant.
    pub spread: f64,
    /// Tap voltages averaged over the bridge period that just ended; empty
    /// for the first sample.
    pub mean_taps: Vec<f64>,
}

/// Everything a simulation run produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub waveform: Waveform,
    pub report: RunReport,
    pub period_samples: Vec<PeriodSample>,
    pub final_state: SimState,
    /// Configuration in force at the end of the run (after any faults).
    pub final_config: ConverterConfig,
}

/// Channel names recorded for a converter with `modules` physical modules.
pub fn channel_names(modules: usize) -> Vec<String> {
    let mut names = vec!["v_out".to_string(), "v_ref".to_string()];
    names.extend((0..modules).map(|m| format!("v_cap_{m}")));
    names.push("i_load".into());
    names.extend((0..modules).map(|m| format!("i_wind_{m}")));
    names.extend(["tap_low", "tap_high", "duty"].map(String::from));
    names
}

const EXTRA: usize = 3;

struct Plant {
    config: ConverterConfig,
    net: Network,
    active: Vec<usize>,
    ladder: Vec<f64>,
    rk: Rk4,
    /// `[state..., E_source, E_load, E_dissipated]`
    y: Vec<f64>,
}

impl Plant {
    fn new(config: ConverterConfig, state: &SimState) -> Result<Self> {
        let net = Network::new(&config)?;
        let mut y = state.as_slice().to_vec();
        y.extend([0.0; EXTRA]);
        Ok(Self {
            active: config.active_modules(),
            ladder: nominal_tap_ladder(&config)?,
            rk: Rk4::new(y.len()),
            net,
            config,
            y,
        })
    }

    fn n(&self) -> usize {
        self.net.modules()
    }

    fn state_len(&self) -> usize {
        self.net.state_len()
    }

    fn v_cap(&self) -> &[f64] {
        &self.y[..self.n()]
    }

    fn i_load(&self) -> f64 {
        self.y[2 * self.n()]
    }

    fn state(&self) -> SimState {
        SimState::from_flat(self.n(), &self.y)
    }

    fn energies(&self) -> [f64; EXTRA] {
        let k = self.state_len();
        [self.y[k], self.y[k + 1], self.y[k + 2]]
    }

    /// Advances by `h` with a fixed switching state; returns the power terms
    /// at the start of the interval.
    fn advance(&mut self, h: f64, sign: f64, tap: usize) -> circuit::PowerTerms {
        let len = self.state_len();
        let net = &self.net;
        let mut first = None;
        self.rk.step(&mut self.y, h, |y, d| {
            let p = net.eval(&y[..len], sign, tap, &mut d[..len]);
            d[len] = p.source;
            d[len + 1] = p.load;
            d[len + 2] = p.dissipation;
            if first.is_none() {
                first = Some(p);
            }
        });
        first.unwrap_or_default()
    }

    /// Removes `module` from the string. Returns the stored energy discarded
    /// with its capacitor, its winding, and the change in magnetizing energy.
    fn bypass(&mut self, module: usize) -> Result<f64> {
        let pos = self
            .active
            .iter()
            .position(|&m| m == module)
            .ok_or_else(|| {
                Error::field(
                    "fault_events.module",
                    format!("module {module} is not active"),
                )
            })?;
        let config = apply_fault_bypass(&self.config, module)?;
        let before = self.net.stored_energy(&self.state());

        let n = self.n();
        let energies = self.energies();
        let mut y = Vec::with_capacity(self.y.len() - 2);
        y.extend(
            self.y[..n]
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != pos)
                .map(|(_, v)| *v),
        );
        y.extend(
            self.y[n..2 * n]
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != pos)
                .map(|(_, v)| *v),
        );
        y.push(self.i_load());
        y.extend(energies);

        let state = SimState::from_flat(n - 1, &y);
        let mut next = Plant::new(config, &state)?;
        next.y = y;
        let after = next.net.stored_energy(&next.state());
        *self = next;
        Ok(before - after)
    }
}

/// Runs `scenario` to completion.
pub fn simulate(scenario: &Scenario) -> Result<SimOutput> {
    scenario.validate()?;
    let dt = scenario.step();
    let grid = SwitchingGrid::new(&scenario.config, dt);
    let total_steps = (scenario.duration / dt).round().max(1.0) as usize;
    let physical = scenario.config.module_count;

    let initial = initial_state(scenario)?;
    let mut plant = Plant::new(scenario.config.clone(), &initial)?;
    let stored_initial = plant.net.stored_energy(&initial);

    let mut events = scenario.fault_events.clone();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut events = events.into_iter().peekable();

    let names = channel_names(physical);
    let rows = total_steps / scenario.record_decimation + 1;
    let mut waveform = Waveform::with_capacity(&names, rows);
    let mut row = vec![0.0; names.len() + 1];

    let mut counters = RunCounters::default();
    let mut fault_discarded = 0.0;
    let mut period_samples = Vec::new();
    let mut tap_sums: Vec<f64> = Vec::new();
    let mut tap_sum_count = 0usize;

    let mut sel: Option<TapSelection> = None;
    let mut prev_polarity = grid.polarity(0);
    let mut prev_pwm: Option<PwmState> = None;

    for n in 0..=total_steps {
        let t = n as f64 * dt;

        let mut reselect = n % grid.tap_steps == 0;
        while let Some(e) = events.next_if(|e| e.time <= t + 1e-9 * dt) {
            fault_discarded += plant.bypass(e.module)?;
            tap_sums.clear();
            tap_sum_count = 0;
            reselect = true;
        }

        let polarity = grid.polarity(n);
        if polarity != prev_polarity {
            counters.bridge += 4 * plant.n() as u64;
            prev_polarity = polarity;
        }

        if n % grid.bridge_period_steps() == 0 {
            let mean_taps = if tap_sum_count > 0 {
                tap_sums.iter().map(|s| s / tap_sum_count as f64).collect()
            } else {
                Vec::new()
            };
            period_samples.push(PeriodSample {
                time: t,
                spread: circuit::spread(plant.v_cap()),
                mean_taps,
            });
            tap_sums.clear();
            tap_sum_count = 0;
        }

        if reselect {
            let next = select_taps(scenario.reference.value_at(t), &plant.ladder)?;
            if let Some(prev) = &sel {
                // Tap indices refer to a different ladder after a fault.
                let toggles = tap_transition_toggle_count(prev, &next);
                counters.record_tap_transition(toggles);
            }
            sel = Some(next);
        }
        let current = sel.expect("selection made at step 0");

        let pos = (n % grid.pwm_steps) as f64;
        let edge = current.duty * grid.pwm_steps as f64;
        let pwm = if pos < edge {
            PwmState::High
        } else {
            PwmState::Low
        };
        if prev_pwm.is_some_and(|p| p != pwm) {
            counters.pwm += 2;
        }
        prev_pwm = Some(pwm);

        if n % scenario.record_decimation == 0 {
            fill_row(
                &mut row,
                t,
                &plant,
                &current,
                pwm,
                scenario.reference.value_at(t),
                physical,
            );
            waveform.push_row(&row);
        }
        if n == total_steps {
            break;
        }

        let taps = circuit::tap_voltages(plant.v_cap());
        if tap_sums.len() != taps.len() {
            tap_sums = vec![0.0; taps.len()];
            tap_sum_count = 0;
        }
        tap_sums.iter_mut().zip(&taps).for_each(|(s, v)| *s += v);
        tap_sum_count += 1;

        let sign = polarity.sign();
        let power = if pwm == PwmState::High && edge < pos + 1.0 {
            // Falling edge inside this step.
            let frac = edge - pos;
            let p = plant.advance(frac * dt, sign, current.high_tap);
            plant.advance((1.0 - frac) * dt, sign, current.low_tap);
            counters.pwm += 2;
            prev_pwm = Some(PwmState::Low);
            p
        } else {
            plant.advance(dt, sign, current.conducting_tap(pwm))
        };
        counters.max_power_residual = counters.max_power_residual.max(power.relative_residual());

        if !plant.y.iter().all(|x| x.is_finite()) {
            return Err(Error::Divergence {
                time: t + dt,
                detail: format!("non-finite state after step {}", n + 1),
            });
        }
    }

    let final_state = plant.state();
    let stored_final = plant.net.stored_energy(&final_state);
    let [e_source, e_load, e_diss] = plant.energies();
    let energy = EnergyAccount::new(
        e_source,
        e_load,
        e_diss,
        stored_initial,
        stored_final,
        fault_discarded,
    );

    let bridge_periods = total_steps / grid.bridge_period_steps();
    let gate_energy = gate_energy_per_run(scenario, &grid, dt, bridge_periods);

    let report = analysis::build_report(
        scenario,
        &waveform,
        &period_samples,
        &plant.config,
        &grid,
        dt,
        total_steps,
        counters,
        energy,
        gate_energy,
    );

    Ok(SimOutput {
        waveform,
        report,
        period_samples,
        final_state,
        final_config: plant.config,
    })
}

fn initial_state(scenario: &Scenario) -> Result<SimState> {
    let config = &scenario.config;
    match &scenario.initial_v_cap {
        None => Ok(SimState::balanced(config)),
        Some(v) => {
            let caps: Vec<f64> = config.active_modules().iter().map(|&m| v[m]).collect();
            SimState::from_parts(&caps, &vec![0.0; caps.len()], 0.0)
        }
    }
}

fn fill_row(
    row: &mut [f64],
    t: f64,
    plant: &Plant,
    sel: &TapSelection,
    pwm: PwmState,
    v_ref: f64,
    physical: usize,
) {
    let n = plant.n();
    let v_cap = plant.v_cap();
    let tap = sel.conducting_tap(pwm);
    row[0] = t;
    row[1] = v_cap[..tap].iter().sum();
    row[2] = v_ref;
    let caps = 3;
    let winds = caps + physical + 1;
    row[caps..caps + physical].iter_mut().for_each(|x| *x = 0.0);
    row[winds..winds + physical]
        .iter_mut()
        .for_each(|x| *x = 0.0);
    for (i, &m) in plant.active.iter().enumerate() {
        row[caps + m] = v_cap[i];
        row[winds + m] = plant.y[n + i];
    }
    row[caps + physical] = plant.i_load();
    let tail = winds + physical;
    row[tail] = sel.low_tap as f64;
    row[tail + 1] = sel.high_tap as f64;
    row[tail + 2] = sel.duty;
}

fn gate_energy_per_run(
    scenario: &Scenario,
    grid: &SwitchingGrid,
    dt: f64,
    bridge_periods: usize,
) -> Option<GateEnergy> {
    let params = match &scenario.gate_driver {
        Some(p) => p.clone(),
        None => GateDriverParams::for_frequency(grid.f_bridge(dt)).ok()?,
    };
    let gate_dt = params.t_rise / 50.0;
    // The clamps reset the loop every period, so one period is representative.
    let run = run_gate_driver(&params, 1, gate_dt).ok()?;
    let per = run.periods.first()?;
    Some(GateEnergy {
        delivered: per.delivered * bridge_periods as f64,
        dissipated: per.dissipated * bridge_periods as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(volts: f64, duration: f64) -> Scenario {
        Scenario::new(
            ConverterConfig::default(),
            Reference::Constant { volts },
            duration,
        )
    }

    #[test]
    fn grid_snaps_default_frequencies() {
        let cfg = ConverterConfig::default();
        let dt = 1.0 / (200.0 * cfg.f_bridge);
        let g = SwitchingGrid::new(&cfg, dt);
        assert_eq!(g.half_bridge_steps, 100);
        assert_eq!(g.pwm_steps, 2200);
        assert_eq!(g.tap_steps, 2200);
        assert!((g.f_bridge(dt) - 110e3).abs() < 1e-6);
        assert!((g.f_pwm(dt) - 10e3).abs() < 1e-6);
    }

    #[test]
    fn duration_shorter_than_step_is_rejected() {
        let mut s = constant(0.0, 1e-9);
        assert!(simulate(&s).is_err());
        s.duration = 0.0;
        assert!(simulate(&s).is_err());
    }

    #[test]
    fn channels_and_grid() {
        let mut s = constant(150.0, 2e-4);
        s.record_decimation = 10;
        let out = simulate(&s).unwrap();
        let w = &out.waveform;
        w.check().unwrap();
        assert_eq!(w.names().len(), 1 + channel_names(4).len());
        let dt = s.step();
        assert_eq!(w.len(), (0.0002 / dt).round() as usize / 10 + 1);
        assert!((w.sample_interval().unwrap() - 10.0 * dt).abs() < 1e-18);
        assert_eq!(w.channel("tap_low").unwrap()[0], 1.0);
        assert_eq!(w.channel("duty").unwrap()[0], 0.5);
    }

    #[test]
    fn runs_are_bit_identical() {
        let mut s = constant(230.0, 1e-4);
        s.initial_v_cap = Some(vec![95.0, 105.0, 98.0, 102.0]);
        let a = simulate(&s).unwrap();
        let b = simulate(&s).unwrap();
        assert_eq!(a.waveform, b.waveform);
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn fault_shrinks_state_and_ladder() {
        let mut s = constant(0.0, 2e-4);
        s.fault_events = vec![FaultEvent {
            time: 1e-4,
            module: 2,
        }];
        let out = simulate(&s).unwrap();
        assert_eq!(out.final_state.modules(), 3);
        assert_eq!(out.final_config.active_modules(), vec![0, 1, 3]);
        let last = *out.waveform.channel("v_cap_2").unwrap().last().unwrap();
        assert_eq!(last, 0.0);
        assert!(out.report.energy.fault_discarded > 0.0);
    }

    #[test]
    fn switching_events_counted() {
        let s = constant(250.0, 1e-4);
        let out = simulate(&s).unwrap();
        let ev = out.report.switching_event_counts;
        // 11 bridge periods, two flips each, 16 devices per flip; last flip
        // lands on the final step boundary.
        assert_eq!(ev.bridge, 16 * 22);
        // Falling edge mid-period, rising edge on the final boundary.
        assert_eq!(ev.pwm, 4);
        assert_eq!(ev.tap, 0);
    }
}
