use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resonant clamped gate driver: supply, transformer, magnetizing inductance,
/// lumped gate capacitance and the piecewise-linear timing of one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateDriverParams {
    /// Gate rail magnitude; the output swings between +v_gd and -v_gd.
    pub v_gd: f64,
    pub l_mag_gd: f64,
    /// Equivalent gate-source capacitance of every driven device.
    pub c_gs_total: f64,
    /// Secondary-to-primary ratio N_S:N_P.
    pub turns_ratio: f64,
    /// Parasitic loop resistance; zero for the ideal driver.
    pub r_loop: f64,
    /// Gate period is 1 / f_bridge.
    pub f_bridge: f64,
    pub t_rise: f64,
    pub t_high: f64,
    pub t_fall: f64,
    pub t_zero: f64,
    pub t_low: f64,
}

/// Half period of the L-C resonance, `pi * sqrt(L * C)`.
pub fn resonant_transition_time(l_mag_gd: f64, c_gs_total: f64) -> f64 {
    PI * (l_mag_gd * c_gs_total).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentKind {
    /// Resonant swing from one level to another.
    Transition { from: f64, to: f64 },
    /// Output clamped at a fixed level.
    Hold { level: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSegment {
    pub start: f64,
    pub duration: f64,
    pub kind: SegmentKind,
}

impl GateSegment {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    /// H-bridge polarity driving the transformer: the sign of the swing's
    /// midpoint during a transition, 0 while clamped.
    pub fn supply_polarity(&self) -> f64 {
        match self.kind {
            SegmentKind::Transition { from, to } => {
                let mid = from + to;
                if mid > 0.0 {
                    1.0
                } else if mid < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            SegmentKind::Hold { .. } => 0.0,
        }
    }

    pub fn end_level(&self) -> f64 {
        match self.kind {
            SegmentKind::Transition { to, .. } => to,
            SegmentKind::Hold { level } => level,
        }
    }

    fn value_at(&self, t: f64) -> f64 {
        match self.kind {
            SegmentKind::Hold { level } => level,
            SegmentKind::Transition { from, to } => {
                if self.duration <= 0.0 {
                    to
                } else {
                    let x = ((t - self.start) / self.duration).clamp(0.0, 1.0);
                    from + (to - from) * x
                }
            }
        }
    }
}

impl GateDriverParams {
    /// Driver for the given switching frequency with rise and fall set to
    /// the resonant transition time, a clamped zero interval of the same
    /// length, and the remaining period split between high and low.
    pub fn for_frequency(f_bridge: f64) -> Result<Self> {
        Self::with_components(f_bridge, 12.0, 1e-6, 20e-9, 0.0)
    }

    pub fn with_components(
        f_bridge: f64,
        v_gd: f64,
        l_mag_gd: f64,
        c_gs_total: f64,
        r_loop: f64,
    ) -> Result<Self> {
        let transition = resonant_transition_time(l_mag_gd, c_gs_total);
        let t_zero = transition;
        let period = 1.0 / f_bridge;
        let plateau = (period - 2.0 * (2.0 * transition + t_zero)) / 2.0;
        if !(plateau >= 0.0) {
            return Err(Error::field(
                "l_mag_gd",
                "resonant transitions do not fit in the switching period",
            ));
        }
        let params = Self {
            v_gd,
            l_mag_gd,
            c_gs_total,
            turns_ratio: 0.5,
            r_loop,
            f_bridge,
            t_rise: transition,
            t_high: plateau,
            t_fall: transition,
            t_zero,
            t_low: plateau,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn period(&self) -> f64 {
        1.0 / self.f_bridge
    }

    /// Sum of all timing components over one period.
    pub fn timing_sum(&self) -> f64 {
        2.0 * (self.t_rise + self.t_fall + self.t_zero) + self.t_high + self.t_low
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("v_gd", self.v_gd),
            ("l_mag_gd", self.l_mag_gd),
            ("c_gs_total", self.c_gs_total),
            ("turns_ratio", self.turns_ratio),
            ("f_bridge", self.f_bridge),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::field(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        for (name, v) in [
            ("r_loop", self.r_loop),
            ("t_rise", self.t_rise),
            ("t_high", self.t_high),
            ("t_fall", self.t_fall),
            ("t_zero", self.t_zero),
            ("t_low", self.t_low),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::field(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        let period = self.period();
        if (self.timing_sum() - period).abs() > 1e-9 * period {
            return Err(Error::field(
                "t_high",
                format!(
                    "timings sum to {:.6e} s but the period is {:.6e} s",
                    self.timing_sum(),
                    period
                ),
            ));
        }
        Ok(())
    }

    /// The eight segments of one period, starting with the rise out of the
    /// zero clamp: rise, high, fall, zero, fall, low, rise, zero.
    pub fn segments(&self) -> [GateSegment; 8] {
        let v = self.v_gd;
        let parts = [
            (self.t_rise, SegmentKind::Transition { from: 0.0, to: v }),
            (self.t_high, SegmentKind::Hold { level: v }),
            (self.t_fall, SegmentKind::Transition { from: v, to: 0.0 }),
            (self.t_zero, SegmentKind::Hold { level: 0.0 }),
            (self.t_fall, SegmentKind::Transition { from: 0.0, to: -v }),
            (self.t_low, SegmentKind::Hold { level: -v }),
            (self.t_rise, SegmentKind::Transition { from: -v, to: 0.0 }),
            (self.t_zero, SegmentKind::Hold { level: 0.0 }),
        ];
        let mut start = 0.0;
        parts.map(|(duration, kind)| {
            let seg = GateSegment {
                start,
                duration,
                kind,
            };
            start += duration;
            seg
        })
    }
}

/// Piecewise-linear gate reference at time `t`, periodic in `1 / f_bridge`.
pub fn gate_waveform_at(t: f64, p: &GateDriverParams) -> Result<f64> {
    p.validate()?;
    let period = p.period();
    let local = t.rem_euclid(period);
    let segments = p.segments();
    let seg = segments
        .iter()
        .find(|s| local < s.end())
        .unwrap_or(&segments[7]);
    Ok(seg.value_at(local))
}
