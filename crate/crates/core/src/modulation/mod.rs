//! Discrete control signals: bridge square waves, tap selection, PWM and the
//! gate-driver reference waveform.

mod gate;

pub use gate::{
    gate_waveform_at, resonant_transition_time, GateDriverParams, GateSegment, SegmentKind,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bridge output polarity. `Positive` means S1/S4 conduct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

/// Switching state shared by every bridge of the autotransformer. All
/// modules run in phase, so one polarity describes the whole string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BridgePhase {
    pub polarity: Polarity,
    /// Zero-voltage clamp interval. Always false in the ideal switch model,
    /// which has no dead time.
    pub clamped: bool,
}

impl BridgePhase {
    pub fn new(polarity: Polarity) -> Self {
        Self {
            polarity,
            clamped: false,
        }
    }

    /// Polarity of module `m`; identical for every module.
    pub fn module_sign(&self, _m: usize) -> f64 {
        if self.clamped {
            0.0
        } else {
            self.polarity.sign()
        }
    }
}

/// Output of the PWM stage: which of the two selected taps conducts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PwmState {
    High,
    Low,
}

/// Tap selector decision: two adjacent (or equal) taps and the fraction of
/// each PWM period spent on the upper one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapSelection {
    pub low_tap: usize,
    pub high_tap: usize,
    pub duty: f64,
}

impl TapSelection {
    /// Checks the selection invariants against a ladder with `tap_count` taps.
    pub fn validate(&self, tap_count: usize) -> Result<()> {
        if self.high_tap >= tap_count {
            return Err(Error::field("high_tap", "outside ladder"));
        }
        if self.low_tap > self.high_tap || self.high_tap - self.low_tap > 1 {
            return Err(Error::field("low_tap", "taps must be adjacent or equal"));
        }
        if !(0.0..=1.0).contains(&self.duty) {
            return Err(Error::field("duty", "must lie in [0, 1]"));
        }
        if self.low_tap == self.high_tap && self.duty != 0.0 && self.duty != 1.0 {
            return Err(Error::field(
                "duty",
                "saturated selection needs duty 0 or 1",
            ));
        }
        Ok(())
    }

    /// Tap that conducts for the given PWM state.
    pub fn conducting_tap(&self, pwm: PwmState) -> usize {
        match pwm {
            PwmState::High => self.high_tap,
            PwmState::Low => self.low_tap,
        }
    }

    /// Average output over a PWM period for the given ladder.
    pub fn mean_output(&self, ladder: &[f64]) -> f64 {
        ladder[self.low_tap] * (1.0 - self.duty) + ladder[self.high_tap] * self.duty
    }
}

/// Bridge polarity at time `t`: positive for the first half of each period.
pub fn bridge_phase_at(t: f64, f_bridge: f64) -> BridgePhase {
    let frac = (t * f_bridge).rem_euclid(1.0);
    let polarity = if frac < 0.5 {
        Polarity::Positive
    } else {
        Polarity::Negative
    };
    BridgePhase::new(polarity)
}

/// Chooses the two taps enclosing `v_ref` and the duty that makes the PWM
/// mean equal to the (clamped) reference.
pub fn select_taps(v_ref: f64, ladder: &[f64]) -> Result<TapSelection> {
    if ladder.len() < 2 || ladder.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidLadder);
    }
    if v_ref.is_nan() {
        return Err(Error::Signal("reference is NaN".into()));
    }
    let top = ladder.len() - 1;
    if v_ref >= ladder[top] {
        return Ok(TapSelection {
            low_tap: top,
            high_tap: top,
            duty: 1.0,
        });
    }
    if v_ref < ladder[0] {
        return Ok(TapSelection {
            low_tap: 0,
            high_tap: 0,
            duty: 0.0,
        });
    }
    // Last tap at or below the reference; a reference sitting on tap k
    // selects (k, k + 1) with zero duty.
    let low = ladder.partition_point(|&v| v <= v_ref) - 1;
    let duty = ((v_ref - ladder[low]) / (ladder[low + 1] - ladder[low])).clamp(0.0, 1.0);
    Ok(TapSelection {
        low_tap: low,
        high_tap: low + 1,
        duty,
    })
}

/// Leading-edge PWM: high for the first `duty` fraction of each period.
pub fn pwm_gate_at(t: f64, sel: &TapSelection, f_pwm: f64) -> PwmState {
    let frac = (t * f_pwm).rem_euclid(1.0);
    if frac < sel.duty {
        PwmState::High
    } else {
        PwmState::Low
    }
}

/// Number of tap-selector devices that change state between two selections.
pub fn tap_transition_toggle_count(prev: &TapSelection, next: &TapSelection) -> usize {
    let taps = |s: &TapSelection| {
        if s.low_tap == s.high_tap {
            vec![s.low_tap]
        } else {
            vec![s.low_tap, s.high_tap]
        }
    };
    let (a, b) = (taps(prev), taps(next));
    a.iter().filter(|t| !b.contains(t)).count() + b.iter().filter(|t| !a.contains(t)).count()
}
