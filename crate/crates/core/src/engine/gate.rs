use serde::{Deserialize, Serialize};

use crate::circuit::{gate_driver_derivatives, GateDriverState};
use crate::error::{Error, Result};
use crate::integrator::Rk4;
use crate::modulation::{
    gate_waveform_at, resonant_transition_time, GateDriverParams, SegmentKind,
};

use super::Waveform;

/// Energy drawn and lost during one gate period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatePeriodEnergy {
    pub delivered: f64,
    pub dissipated: f64,
    /// `dissipated / delivered`, zero when nothing was delivered.
    pub ratio: f64,
    /// L-C energy at the start of the period.
    pub stored_start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateEnergyReport {
    pub periods: usize,
    pub delivered: f64,
    pub dissipated: f64,
    pub ratio: f64,
    /// Worst single-period ratio.
    pub max_period_ratio: f64,
    /// Time from the start of the first rise to the rail crossing, or to the
    /// voltage peak if the swing turns back before reaching the rail.
    pub rise_time: f64,
    pub expected_rise_time: f64,
}

#[derive(Debug, Clone)]
pub struct GateDriverRun {
    /// Channels `v_gate`, `i_lmag`, `v_reference` on the integration grid.
    pub trajectory: Waveform,
    pub periods: Vec<GatePeriodEnergy>,
    pub report: GateEnergyReport,
    pub final_state: GateDriverState,
}

struct RiseProbe {
    rail: f64,
    crossing: Option<f64>,
    peak: Option<f64>,
}

impl RiseProbe {
    fn observe(&mut self, t0: f64, t1: f64, before: &GateDriverState, after: &GateDriverState) {
        if self.crossing.is_some() || self.peak.is_some() {
            return;
        }
        let lerp = |a: f64, b: f64, target: f64| {
            if b == a {
                t1
            } else {
                t0 + (t1 - t0) * (target - a) / (b - a)
            }
        };
        if before.v_gate < self.rail && after.v_gate >= self.rail {
            self.crossing = Some(lerp(before.v_gate, after.v_gate, self.rail));
        } else if before.i_lmag > 0.0 && after.i_lmag <= 0.0 {
            self.peak = Some(lerp(before.i_lmag, after.i_lmag, 0.0));
        }
    }

    fn result(&self) -> Option<f64> {
        self.crossing.or(self.peak)
    }
}

/// Drives the gate-driver loop through `periods` cycles of its switching
/// schedule with fixed step `dt`, splitting steps at segment boundaries.
///
/// Every hold segment clamps the output: on entry the capacitor is snapped
/// to the hold level and the loop current is quenched, and any energy that
/// takes is booked as dissipation.
pub fn run_gate_driver(p: &GateDriverParams, periods: usize, dt: f64) -> Result<GateDriverRun> {
    p.validate()?;
    if periods == 0 {
        return Err(Error::field("periods", "must be >= 1"));
    }
    if !(dt.is_finite() && dt > 0.0) || dt > p.t_rise / 20.0 {
        return Err(Error::field(
            "dt",
            format!(
                "must be positive and at most t_rise / 20 = {:e} s",
                p.t_rise / 20.0
            ),
        ));
    }

    let period = p.period();
    let segments = p.segments();
    let mut boundaries = Vec::with_capacity(periods * segments.len());
    for k in 0..periods {
        let base = k as f64 * period;
        for (i, s) in segments.iter().enumerate() {
            boundaries.push((base + s.end(), (i + 1) % segments.len()));
        }
    }

    let mut state = GateDriverState {
        clamp_active: false,
        ..Default::default()
    };
    let mut segment = 0usize;
    let mut rk = Rk4::new(4);
    let mut y = [0.0; 4];
    let mut probe = RiseProbe {
        rail: p.v_gd,
        crossing: None,
        peak: None,
    };

    let total_time = periods as f64 * period;
    let steps = (total_time / dt).ceil() as usize;
    let mut trajectory = Waveform::with_capacity(&["v_gate", "i_lmag", "v_reference"], steps + 1);
    let reference = |t: f64| gate_waveform_at(t, p).unwrap_or(f64::NAN);
    trajectory.push_row(&[0.0, state.v_gate, state.i_lmag, reference(0.0)]);

    let mut period_marks = vec![(state.delivered_energy, state.dissipated_energy, 0.0)];
    let mut next_boundary = 0usize;
    let mut t = 0.0;

    for k in 1..=steps {
        let t_end = (k as f64 * dt).min(total_time);
        while next_boundary < boundaries.len() && boundaries[next_boundary].0 <= t_end {
            let (tb, next_segment) = boundaries[next_boundary];
            if tb > t {
                integrate(
                    &mut rk,
                    &mut y,
                    &mut state,
                    p,
                    segments[segment].supply_polarity(),
                    t,
                    tb,
                    &mut probe,
                    segment == 0 && tb <= period,
                );
                t = tb;
            }
            enter_segment(&mut state, p, &segments[next_segment].kind);
            segment = next_segment;
            next_boundary += 1;
            if next_boundary.is_multiple_of(segments.len()) {
                period_marks.push((
                    state.delivered_energy,
                    state.dissipated_energy,
                    state.stored_energy(p),
                ));
            }
        }
        if t_end > t {
            integrate(
                &mut rk,
                &mut y,
                &mut state,
                p,
                segments[segment].supply_polarity(),
                t,
                t_end,
                &mut probe,
                segment == 0 && t_end <= period,
            );
            t = t_end;
        }
        if !state.is_finite() {
            return Err(Error::Divergence {
                time: t,
                detail: "gate driver state is non-finite".into(),
            });
        }
        trajectory.push_row(&[t, state.v_gate, state.i_lmag, reference(t)]);
    }

    let periods_energy: Vec<GatePeriodEnergy> = period_marks
        .windows(2)
        .map(|w| {
            let delivered = w[1].0 - w[0].0;
            let dissipated = w[1].1 - w[0].1;
            GatePeriodEnergy {
                delivered,
                dissipated,
                ratio: if delivered > 0.0 {
                    dissipated / delivered
                } else {
                    0.0
                },
                stored_start: w[0].2,
            }
        })
        .collect();

    let delivered = state.delivered_energy;
    let dissipated = state.dissipated_energy;
    let report = GateEnergyReport {
        periods,
        delivered,
        dissipated,
        ratio: if delivered > 0.0 {
            dissipated / delivered
        } else {
            0.0
        },
        max_period_ratio: periods_energy.iter().map(|e| e.ratio).fold(0.0, f64::max),
        rise_time: probe.result().unwrap_or(p.t_rise),
        expected_rise_time: resonant_transition_time(p.l_mag_gd, p.c_gs_total),
    };

    Ok(GateDriverRun {
        trajectory,
        periods: periods_energy,
        report,
        final_state: state,
    })
}

fn enter_segment(state: &mut GateDriverState, p: &GateDriverParams, kind: &SegmentKind) {
    match *kind {
        SegmentKind::Hold { level } => {
            let dv = state.v_gate - level;
            state.dissipated_energy +=
                0.5 * p.c_gs_total * dv * dv + 0.5 * p.l_mag_gd * state.i_lmag * state.i_lmag;
            state.v_gate = level;
            state.i_lmag = 0.0;
            state.clamp_active = true;
        }
        SegmentKind::Transition { .. } => state.clamp_active = false,
    }
}

#[allow(clippy::too_many_arguments)]
fn integrate(
    rk: &mut Rk4,
    y: &mut [f64; 4],
    state: &mut GateDriverState,
    p: &GateDriverParams,
    polarity: f64,
    t0: f64,
    t1: f64,
    probe: &mut RiseProbe,
    first_rise: bool,
) {
    if state.clamp_active {
        return;
    }
    let before = *state;
    *y = [
        state.v_gate,
        state.i_lmag,
        state.dissipated_energy,
        state.delivered_energy,
    ];
    rk.step(y, t1 - t0, |y, d| {
        let s = GateDriverState {
            v_gate: y[0],
            i_lmag: y[1],
            clamp_active: false,
            dissipated_energy: y[2],
            delivered_energy: y[3],
        };
        let r = gate_driver_derivatives(&s, p, polarity);
        d[0] = r.dv_gate;
        d[1] = r.di_lmag;
        d[2] = r.dissipated;
        d[3] = r.delivered;
    });
    state.v_gate = y[0];
    state.i_lmag = y[1];
    state.dissipated_energy = y[2];
    state.delivered_energy = y[3];
    if first_rise {
        probe.observe(t0, t1, &before, state);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal() -> GateDriverParams {
        GateDriverParams::for_frequency(110e3).unwrap()
    }

    #[test]
    fn coarse_step_rejected() {
        let p = ideal();
        assert!(run_gate_driver(&p, 1, p.t_rise / 10.0).is_err());
        assert!(run_gate_driver(&p, 0, p.t_rise / 50.0).is_err());
    }

    #[test]
    fn ideal_driver_recovers_energy() {
        let p = ideal();
        let run = run_gate_driver(&p, 10, p.t_rise / 50.0).unwrap();
        assert_eq!(run.periods.len(), 10);
        for e in &run.periods {
            assert!(e.ratio < 1e-3, "{e:?}");
            assert!(e.delivered > 0.0);
            assert_eq!(e.stored_start, 0.0);
        }
        // Energy per rise is C V^2 / 2, two rises (0 -> +V, 0 -> -V) per period.
        let expected = p.c_gs_total * p.v_gd * p.v_gd;
        assert!((run.periods[0].delivered - expected).abs() < 1e-4 * expected);
        let rel = (run.report.rise_time - run.report.expected_rise_time).abs()
            / run.report.expected_rise_time;
        assert!(
            rel < 0.01,
            "rise {} vs {}",
            run.report.rise_time,
            run.report.expected_rise_time
        );
    }

    #[test]
    fn trajectory_follows_reference_shape() {
        let p = ideal();
        let run = run_gate_driver(&p, 1, p.t_rise / 50.0).unwrap();
        let v = run.trajectory.channel("v_gate").unwrap();
        let max = v.iter().cloned().fold(f64::MIN, f64::max);
        let min = v.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - p.v_gd).abs() < 1e-3 * p.v_gd);
        assert!((min + p.v_gd).abs() < 1e-3 * p.v_gd);
        run.trajectory.check().unwrap();
    }

    #[test]
    fn lossy_loop_has_positive_ratio() {
        let p = GateDriverParams::with_components(110e3, 12.0, 1e-6, 20e-9, 1.0).unwrap();
        let run = run_gate_driver(&p, 3, p.t_rise / 50.0).unwrap();
        assert!(run.report.ratio > 0.0);
        let mut last = 0.0;
        for e in &run.periods {
            assert!(e.dissipated > 0.0);
            last += e.dissipated;
        }
        assert!((last - run.report.dissipated).abs() < 1e-15);
    }
}
