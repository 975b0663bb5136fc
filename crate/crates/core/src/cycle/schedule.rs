//! Time stepping for a linear field ramp as a list of constant-field
//! exponentials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::RampProtocol;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// One exponential per step at the midpoint field; second order.
    Midpoint,
    /// Two-exponential commutator-free Magnus scheme; fourth order.
    #[default]
    Magnus4,
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "midpoint" => Ok(Integrator::Midpoint),
            "magnus4" | "cf4" => Ok(Integrator::Magnus4),
            other => Err(Error::InvalidParams(format!(
                "unknown integrator '{other}' (expected midpoint or magnus4)"
            ))),
        }
    }
}

impl std::fmt::Display for Integrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Integrator::Midpoint => "midpoint",
            Integrator::Magnus4 => "magnus4",
        })
    }
}

/// `exp(-i H(field) duration)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponential {
    pub field: f64,
    pub duration: f64,
}

/// Exponentials to apply in order to integrate `protocol`.
///
/// The ramp is cut into `ceil(duration / dt_max)` equal steps. Because
/// `H(h)` is affine in `h`, each Magnus exponential is again `H` at an
/// effective field, which keeps the sparse structure intact.
pub fn exponential_schedule(protocol: &RampProtocol, dt_max: f64, integrator: Integrator) -> Result<Vec<Exponential>> {
    if !(dt_max > 0.0 && dt_max.is_finite()) {
        return Err(Error::InvalidParams(format!("dt_max must be positive, got {dt_max}")));
    }
    let tau = protocol.duration;
    if tau == 0.0 {
        return Ok(Vec::new());
    }
    let steps = (tau / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let dt = tau / steps as f64;
    let mut out = Vec::with_capacity(2 * steps);
    match integrator {
        Integrator::Midpoint => {
            for n in 0..steps {
                let t = (n as f64 + 0.5) * dt;
                out.push(Exponential {
                    field: protocol.field_at(t)?,
                    duration: dt,
                });
            }
        }
        Integrator::Magnus4 => {
            let s3 = 3f64.sqrt();
            let (c1, c2) = (0.5 - s3 / 6.0, 0.5 + s3 / 6.0);
            let (a1, a2) = ((3.0 - 2.0 * s3) / 12.0, (3.0 + 2.0 * s3) / 12.0);
            for n in 0..steps {
                let t = n as f64 * dt;
                let f1 = protocol.field_at(t + c1 * dt)?;
                let f2 = protocol.field_at(t + c2 * dt)?;
                // a1 + a2 = 1/2, so each factor is H(h_eff) for half a step.
                out.push(Exponential {
                    field: 2.0 * (a2 * f1 + a1 * f2),
                    duration: 0.5 * dt,
                });
                out.push(Exponential {
                    field: 2.0 * (a1 * f1 + a2 * f2),
                    duration: 0.5 * dt,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_count_and_total_time() {
        let p = RampProtocol::new(10.0, 0.2, 0.1).unwrap();
        let mid = exponential_schedule(&p, 1e-3, Integrator::Midpoint).unwrap();
        assert_eq!(mid.len(), 100);
        let total: f64 = mid.iter().map(|e| e.duration).sum();
        assert!((total - 0.1).abs() < 1e-14);
        assert!((mid[0].field - p.field_at(0.0005).unwrap()).abs() < 1e-12);

        let cf = exponential_schedule(&p, 0.03, Integrator::Magnus4).unwrap();
        assert_eq!(cf.len(), 8);
        let total: f64 = cf.iter().map(|e| e.duration).sum();
        assert!((total - 0.1).abs() < 1e-14);
    }

    #[test]
    fn constant_protocol_keeps_field() {
        let p = RampProtocol::new(1.5, 1.5, 2.0).unwrap();
        for integ in [Integrator::Midpoint, Integrator::Magnus4] {
            for e in exponential_schedule(&p, 0.1, integ).unwrap() {
                assert!((e.field - 1.5).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn magnus_fields_average_to_step_midpoint() {
        let p = RampProtocol::new(0.0, 1.0, 1.0).unwrap();
        let s = exponential_schedule(&p, 1.0, Integrator::Magnus4).unwrap();
        assert!(((s[0].field + s[1].field) / 2.0 - 0.5).abs() < 1e-14);
        assert!(s[0].field < s[1].field);
    }

    #[test]
    fn empty_ramp_and_bad_step() {
        let p = RampProtocol::new(1.0, 2.0, 0.0).unwrap();
        assert!(exponential_schedule(&p, 1e-3, Integrator::Magnus4).unwrap().is_empty());
        assert!(exponential_schedule(&p, 0.0, Integrator::Magnus4).is_err());
    }
}
