//! The four-stroke Otto cycle with an optional free-evolution segment.
//!
//! Strokes: thermalize at `(h1, T_H)` (A to B), ramp `h1 -> h2` over `tau1`
//! (B to C), thermalize at `(h2, T_C)` (C to D), ramp `h2 -> h1` over `tau2`
//! (D to A'), then evolve under `H0` alone for `tau_k` (A' to A).
//! Thermalization is instantaneous replacement by the Gibbs state;
//! `tau_bath` only enters the cycle time.

mod dense;
mod schedule;

pub use dense::{
    convergence_check, evolve_ramp, free_evolve, run_cycle, run_cycle_adiabatic, run_cycle_statevector,
    ConvergenceReport, DenseCycle, WEIGHT_CUTOFF,
};
pub use schedule::{exponential_schedule, Exponential, Integrator};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::RampProtocol;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleParams {
    pub h1: f64,
    pub h2: f64,
    pub t_hot: f64,
    pub t_cold: f64,
    pub tau1: f64,
    pub tau2: f64,
    /// Combined hot and cold thermalization time.
    pub tau_bath: f64,
    pub tau_k: f64,
    pub dt_max: f64,
    pub integrator: Integrator,
}

impl Default for CycleParams {
    fn default() -> Self {
        Self {
            h1: 10.0,
            h2: 0.2,
            t_hot: 100.0,
            t_cold: 0.001,
            tau1: 0.1,
            tau2: 0.1,
            tau_bath: 0.2,
            tau_k: 0.0,
            dt_max: 1e-3,
            integrator: Integrator::Magnus4,
        }
    }
}

impl CycleParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !self.h1.is_finite() || !self.h2.is_finite() {
            return bad("fields must be finite".into());
        }
        if !(self.h1 > self.h2) {
            return bad(format!("need h1 > h2, got h1 = {}, h2 = {}", self.h1, self.h2));
        }
        if !(self.t_cold >= 0.0) || self.t_hot.is_nan() {
            return bad(format!("temperatures must be >= 0, got T_C = {}", self.t_cold));
        }
        if !(self.t_hot > self.t_cold) {
            return bad(format!("need T_H > T_C, got T_H = {}, T_C = {}", self.t_hot, self.t_cold));
        }
        for (name, v) in [
            ("tau1", self.tau1),
            ("tau2", self.tau2),
            ("tau_bath", self.tau_bath),
            ("tau_k", self.tau_k),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return bad(format!("dt_max must be positive, got {}", self.dt_max));
        }
        Ok(())
    }

    /// B to C.
    pub fn expansion_ramp(&self) -> Result<RampProtocol> {
        RampProtocol::new(self.h1, self.h2, self.tau1)
    }

    /// D to A'.
    pub fn compression_ramp(&self) -> Result<RampProtocol> {
        RampProtocol::new(self.h2, self.h1, self.tau2)
    }

    /// Cycle time excluding the free segment.
    pub fn base_time(&self) -> f64 {
        self.tau1 + self.tau2 + self.tau_bath
    }
}

/// Energies at the stroke boundaries that do not depend on `tau_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageEnergies {
    pub e_b: f64,
    pub e_c: f64,
    pub e_d: f64,
    pub e_aprime: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleResult {
    pub e_a: f64,
    pub e_aprime: f64,
    pub e_b: f64,
    pub e_c: f64,
    pub e_d: f64,
    pub q_in: f64,
    pub q_out: f64,
    pub work: f64,
    /// `-W / Q_in`; `None` when `Q_in = 0`.
    pub efficiency: Option<f64>,
    /// `W / tau_total`; `None` when the cycle takes no time.
    pub power: Option<f64>,
    pub is_engine: bool,
    pub tau_k: f64,
    pub tau_total: f64,
    /// `E_A' - E_A`; positive when the free segment lowers the energy at A.
    pub free_gain: f64,
}

impl CycleResult {
    /// Assemble heats, work, efficiency and power. `tau_total = inf` marks a
    /// quasi-static cycle and yields zero power.
    pub fn assemble(stages: StageEnergies, e_a: f64, tau_k: f64, tau_total: f64) -> Self {
        let q_in = stages.e_b - e_a;
        let q_out = stages.e_d - stages.e_c;
        let work = -(q_in + q_out);
        let efficiency = (q_in != 0.0).then(|| -work / q_in);
        let power = if tau_total.is_infinite() {
            Some(0.0)
        } else {
            (tau_total > 0.0).then(|| work / tau_total)
        };
        Self {
            e_a,
            e_aprime: stages.e_aprime,
            e_b: stages.e_b,
            e_c: stages.e_c,
            e_d: stages.e_d,
            q_in,
            q_out,
            work,
            efficiency,
            power,
            is_engine: q_in > 0.0 && q_out < 0.0 && work < 0.0,
            tau_k,
            tau_total,
            free_gain: stages.e_aprime - e_a,
        }
    }

    /// `eta <= 1 - T_C/T_H + 1e-9` whenever the cycle runs as an engine.
    pub fn respects_carnot(&self, t_hot: f64, t_cold: f64) -> bool {
        match (self.is_engine, self.efficiency) {
            (true, Some(eta)) => eta > 0.0 && eta <= 1.0 - t_cold / t_hot + 1e-9,
            _ => true,
        }
    }
}

/// A cycle evaluated up to A', ready to be closed with any `tau_k`.
pub trait PreparedCycle: Sync {
    fn params(&self) -> &CycleParams;

    fn stages(&self) -> StageEnergies;

    /// Cycle time for a given free segment; infinite for quasi-static ramps.
    fn cycle_time(&self, tau_k: f64) -> f64 {
        self.params().base_time() + tau_k
    }

    /// `E_A` after free evolution for `tau_k`.
    fn energy_at_a(&self, tau_k: f64) -> Result<f64>;

    /// `E_A` at `tau_k = n * step` for `n < points`.
    fn energy_on_grid(&self, step: f64, points: usize) -> Result<Vec<f64>> {
        (0..points).map(|n| self.energy_at_a(n as f64 * step)).collect()
    }

    fn finish(&self, tau_k: f64) -> Result<CycleResult> {
        let e_a = self.energy_at_a(tau_k)?;
        Ok(CycleResult::assemble(self.stages(), e_a, tau_k, self.cycle_time(tau_k)))
    }
}

pub(crate) fn check_tau_k(tau_k: f64) -> Result<()> {
    if !(tau_k >= 0.0 && tau_k.is_finite()) {
        return Err(Error::domain("tau_k", format!("must be finite and >= 0, got {tau_k}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stages() -> StageEnergies {
        StageEnergies {
            e_b: -1.0,
            e_c: -0.5,
            e_d: -3.0,
            e_aprime: -4.0,
        }
    }

    #[test]
    fn assemble_books_heat_and_work() {
        let r = CycleResult::assemble(stages(), -4.5, 0.25, 0.65);
        assert_eq!(r.q_in, 3.5);
        assert_eq!(r.q_out, -2.5);
        assert_eq!(r.work, -(r.q_in + r.q_out));
        assert!(r.is_engine);
        assert!((r.efficiency.unwrap() - 1.0 / 3.5).abs() < 1e-15);
        assert!((r.power.unwrap() - -1.0 / 0.65).abs() < 1e-15);
        assert_eq!(r.free_gain, 0.5);
    }

    #[test]
    fn zero_heat_input_has_no_efficiency() {
        let r = CycleResult::assemble(stages(), -1.0, 0.0, 1.0);
        assert_eq!(r.q_in, 0.0);
        assert_eq!(r.efficiency, None);
        assert!(!r.is_engine);
    }

    #[test]
    fn quasi_static_cycle_has_zero_power() {
        let r = CycleResult::assemble(stages(), -4.0, 0.0, f64::INFINITY);
        assert_eq!(r.power, Some(0.0));
        let r = CycleResult::assemble(stages(), -4.0, 0.0, 0.0);
        assert_eq!(r.power, None);
    }

    #[test]
    fn param_validation() {
        assert!(CycleParams::default().validate().is_ok());
        let mut p = CycleParams::default();
        p.h2 = 20.0;
        assert!(p.validate().is_err());
        let mut p = CycleParams::default();
        p.t_cold = 200.0;
        assert!(p.validate().is_err());
        let mut p = CycleParams::default();
        p.tau1 = -0.1;
        assert!(p.validate().is_err());
        let mut p = CycleParams::default();
        p.dt_max = 0.0;
        assert!(p.validate().is_err());
        let mut p = CycleParams::default();
        p.t_cold = 0.0;
        assert!(p.validate().is_ok());
    }
}
