use serde::{Deserialize, Serialize};

use crate::modulation::GateDriverParams;

/// L-C state of the gate-drive loop plus its energy ledger.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GateDriverState {
    /// Voltage across the lumped gate-source capacitance.
    pub v_gate: f64,
    /// Current through the driver's magnetizing inductance.
    pub i_lmag: f64,
    pub clamp_active: bool,
    /// Energy lost in the loop resistance and at clamp engagement.
    pub dissipated_energy: f64,
    /// Energy drawn from the supply (positive flow only).
    pub delivered_energy: f64,
}

impl GateDriverState {
    /// Energy held in the inductor and the gate capacitance.
    pub fn stored_energy(&self, p: &GateDriverParams) -> f64 {
        0.5 * p.l_mag_gd * self.i_lmag * self.i_lmag
            + 0.5 * p.c_gs_total * self.v_gate * self.v_gate
    }

    pub fn is_finite(&self) -> bool {
        self.v_gate.is_finite()
            && self.i_lmag.is_finite()
            && self.dissipated_energy.is_finite()
            && self.delivered_energy.is_finite()
    }
}

/// Time derivatives of the gate-driver state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GateDriverRates {
    pub dv_gate: f64,
    pub di_lmag: f64,
    pub dissipated: f64,
    pub delivered: f64,
}

/// Series loop: secondary EMF `polarity * turns_ratio * v_gd`, magnetizing
/// inductance, loop resistance and gate capacitance. A clamped output holds
/// every derivative at zero.
pub fn gate_driver_derivatives(
    state: &GateDriverState,
    p: &GateDriverParams,
    supply_polarity: f64,
) -> GateDriverRates {
    if state.clamp_active {
        return GateDriverRates::default();
    }
    let emf = supply_polarity * p.turns_ratio * p.v_gd;
    let i = state.i_lmag;
    GateDriverRates {
        dv_gate: i / p.c_gs_total,
        di_lmag: (emf - p.r_loop * i - state.v_gate) / p.l_mag_gd,
        dissipated: p.r_loop * i * i,
        delivered: (emf * i).max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(r_loop: f64) -> GateDriverParams {
        GateDriverParams::with_components(110e3, 12.0, 1e-6, 20e-9, r_loop).unwrap()
    }

    #[test]
    fn clamp_freezes_state() {
        let p = params(0.0);
        let s = GateDriverState {
            v_gate: p.v_gd,
            i_lmag: 0.0,
            clamp_active: true,
            ..Default::default()
        };
        let r = gate_driver_derivatives(&s, &p, 1.0);
        assert_eq!(r.dv_gate, 0.0);
        assert_eq!(r.di_lmag, 0.0);
    }

    #[test]
    fn lossless_loop_does_not_dissipate() {
        let p = params(0.0);
        let s = GateDriverState {
            i_lmag: 3.0,
            ..Default::default()
        };
        assert_eq!(gate_driver_derivatives(&s, &p, 1.0).dissipated, 0.0);
    }

    #[test]
    fn resistive_loop_dissipates_while_current_flows() {
        let p = params(1.0);
        let s = GateDriverState {
            i_lmag: 0.5,
            ..Default::default()
        };
        let r = gate_driver_derivatives(&s, &p, 1.0);
        assert!((r.dissipated - 0.25).abs() < 1e-15);
        assert!(r.delivered > 0.0);
        let idle = GateDriverState::default();
        assert_eq!(gate_driver_derivatives(&idle, &p, 0.0).dissipated, 0.0);
    }
}
