//! Closed forms for the two-spin cycle, ground-state return probabilities
//! after free evolution, and the free-evolution time optimizer.
//!
//! Two-spin conventions: the periodic pair counts its bond twice, so
//! `H(h)` has levels `-2r, -2J, 2J, 2r` with `r = sqrt(J^2 + h^2)`. Only the
//! `+-2r` pair lives in the spin-flip-even sector that `H0` rotates; the
//! `+-2J` levels are eigenstates of `H0` and never move.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cycle::{check_tau_k, CycleParams, CycleResult, DenseCycle, PreparedCycle, StageEnergies};
use crate::error::{Error, Result};
use crate::linalg::{boltzmann_weights, C64};
use crate::models::{ModelKind, ModelSpec};

/// Grid points used when a caller does not pick a scan resolution.
pub const DEFAULT_GRID_POINTS: usize = 129;
/// Smallest scan the optimizer accepts.
pub const MIN_GRID_POINTS: usize = 16;
/// Width of the final golden-section bracket.
pub const REFINE_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSpinCoefficients {
    pub alpha: f64,
    pub delta: f64,
}

/// `sinh(x/T) / (cosh(a/T) + cosh(b/T))` with the dominant exponential
/// factored out. `T = 0` returns the limit.
fn hyperbolic_ratio(x: f64, a: f64, b: f64, t: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        return 0.0;
    }
    if t == 0.0 {
        if x.abs() < m {
            return 0.0;
        }
        let ties = [a, b].iter().filter(|v| v.abs() == m).count() as f64;
        return x.signum() / ties;
    }
    let u = m / t;
    let e = |v: f64| (v / t - u).exp();
    (e(x) - e(-x)) / (e(a) + e(-a) + e(b) + e(-b))
}

/// `alpha` and `delta` of the adiabatic two-spin cycle.
///
/// At `T_C = 0` this returns the limit: `alpha = h1 / (2 sqrt(h1^2 + J^2))`
/// and `delta = 0` whenever `h2 != 0`.
pub fn two_spin_coefficients(h1: f64, h2: f64, j: f64, t_cold: f64) -> Result<TwoSpinCoefficients> {
    if ![h1, h2, j].iter().all(|v| v.is_finite()) {
        return Err(Error::domain("fields", "h1, h2 and J must be finite"));
    }
    if j == 0.0 || h1 == 0.0 {
        return Err(Error::domain("fields", "h1 and J must be nonzero"));
    }
    if !(t_cold >= 0.0) || t_cold.is_infinite() {
        return Err(Error::domain("temperature", format!("T_C must be finite and >= 0, got {t_cold}")));
    }
    let r1 = h1.hypot(j);
    let r2 = h2.hypot(j);
    Ok(TwoSpinCoefficients {
        alpha: h1 / (2.0 * r1) * hyperbolic_ratio(2.0 * r2, 2.0 * j, 2.0 * r2, t_cold),
        delta: -0.5 * hyperbolic_ratio(2.0 * j, 2.0 * j, 2.0 * r2, t_cold),
    })
}

/// `E_A'` after an adiabatic compression: `-4 h1 alpha - 4 J^2 alpha / h1 + 4 J delta`.
pub fn two_spin_energy_aprime(c: &TwoSpinCoefficients, h1: f64, j: f64) -> f64 {
    -4.0 * h1 * c.alpha - 4.0 * j * j * c.alpha / h1 + 4.0 * j * c.delta
}

/// The published closed form for `E_A(tau_k)`, evaluated as printed,
/// including the `cos(4 h1)` and `sin(4 h1)` factors.
pub fn two_spin_energy_a(tau_k: f64, c: &TwoSpinCoefficients, h1: f64, j: f64) -> f64 {
    let phase = 4.0 * j * tau_k;
    -4.0 * h1 * c.alpha * phase.cos() - 4.0 * j * j * c.alpha / h1 * (4.0 * h1).cos() + 4.0 * j * c.delta
        - 4.0 * j * c.alpha * (4.0 * h1).sin() * phase.sin()
}

/// `E_A(tau_k)` obtained by propagating the adiabatic `A'` state exactly:
/// `-4 h1 alpha cos(4 J tau_k) - 4 J^2 alpha / h1 + 4 J delta`.
pub fn two_spin_energy_a_exact(tau_k: f64, c: &TwoSpinCoefficients, h1: f64, j: f64) -> f64 {
    -4.0 * h1 * c.alpha * (4.0 * j * tau_k).cos() - 4.0 * j * j * c.alpha / h1 + 4.0 * j * c.delta
}

/// Roots of `tan(4 J tau) = (J / h1) sin(4 h1)` in `[0, tau_max]`, ascending.
/// These are the stationary points of [`two_spin_energy_a`].
pub fn two_spin_stationary_points(h1: f64, j: f64, tau_max: f64) -> Vec<f64> {
    let theta = (j / h1 * (4.0 * h1).sin()).atan();
    let span = (4.0 * j.abs() * tau_max / PI).ceil() as i64 + 2;
    let mut roots: Vec<f64> = (-span..=span)
        .map(|n| (theta + n as f64 * PI) / (4.0 * j))
        .filter(|&t| (0.0..=tau_max).contains(&t))
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}

fn two_spin_levels(h: f64, j: f64) -> [f64; 4] {
    let r = h.hypot(j);
    let j = j.abs();
    [-2.0 * r, -2.0 * j, 2.0 * j, 2.0 * r]
}

fn mean(p: &[f64], e: &[f64; 4]) -> f64 {
    p.iter().zip(e).map(|(p, e)| p * e).sum()
}

/// Two-spin transverse-field cycle with quasi-static ramps, in closed form.
///
/// Ramps carry populations level by level. The free segment rotates only the
/// even sector and raises `E_A` by
/// `(p_0 - p_3) 2 h1^2 (1 - cos 4 J tau_k) / r1`. The cycle time is
/// infinite, so power is reported as zero.
#[derive(Clone, Debug)]
pub struct TwoSpinCycle {
    params: CycleParams,
    coupling: f64,
    stages: StageEnergies,
    /// `(p_0 - p_3) 2 h1^2 / r1`.
    lift: f64,
}

impl TwoSpinCycle {
    pub fn prepare(coupling: f64, params: &CycleParams) -> Result<Self> {
        params.validate()?;
        let j = coupling;
        if j == 0.0 || !j.is_finite() {
            return Err(Error::InvalidModel(format!("coupling J must be finite and nonzero, got {j}")));
        }
        let p = params;
        let (hi, lo) = (two_spin_levels(p.h1, j), two_spin_levels(p.h2, j));
        let hot = boltzmann_weights(&hi, p.t_hot)?;
        let cold = boltzmann_weights(&lo, p.t_cold)?;
        Ok(Self {
            params: *params,
            coupling,
            stages: StageEnergies {
                e_b: mean(&hot, &hi),
                e_c: mean(&hot, &lo),
                e_d: mean(&cold, &lo),
                e_aprime: mean(&cold, &hi),
            },
            lift: (cold[0] - cold[3]) * 2.0 * p.h1 * p.h1 / p.h1.hypot(j),
        })
    }
}

impl PreparedCycle for TwoSpinCycle {
    fn params(&self) -> &CycleParams {
        &self.params
    }

    fn stages(&self) -> StageEnergies {
        self.stages
    }

    fn cycle_time(&self, _tau_k: f64) -> f64 {
        f64::INFINITY
    }

    fn energy_at_a(&self, tau_k: f64) -> Result<f64> {
        check_tau_k(tau_k)?;
        Ok(self.stages.e_aprime + self.lift * (1.0 - (4.0 * self.coupling * tau_k).cos()))
    }
}

/// [`TwoSpinCycle`] closed at `params.tau_k`.
pub fn two_spin_adiabatic_cycle(j: f64, params: &CycleParams) -> Result<CycleResult> {
    TwoSpinCycle::prepare(j, params)?.finish(params.tau_k)
}

/// `|cos(J tau)^L + (i sin(J tau))^L|^2`: probability of returning to the
/// fully `x`-polarized state after free evolution of the transverse chain.
pub fn ground_state_probability_tim(sites: usize, j: f64, tau_k: f64) -> Result<f64> {
    if sites < 2 || sites % 2 != 0 {
        return Err(Error::domain("sites", format!("need an even chain length >= 2, got {sites}")));
    }
    let phase = j * tau_k;
    let l = sites as i32;
    let a = C64::new(phase.cos().powi(l), 0.0) + C64::new(0.0, phase.sin()).powi(l);
    Ok(a.norm_sqr())
}

/// Return probability to the `x`-polarized state for the longitudinal model
/// at `L = 2` or `L = 4`.
///
/// `L = 2` uses `cos^4(B t) cos^2(2 J t) + sin^2(2 J t) sin^4(B t)`. For
/// `L = 4` the amplitude is
/// `(2 e^{-4iJt} cos 4Bt + 8 cos 2Bt + 4 + 2 e^{4iJt}) / 16`, summed over
/// the sixteen `z` configurations.
pub fn ground_state_probability_ltim(sites: usize, j: f64, b: f64, tau_k: f64) -> Result<f64> {
    let t = tau_k;
    match sites {
        2 => {
            let (cb, sb) = ((b * t).cos(), (b * t).sin());
            let (c2, s2) = ((2.0 * j * t).cos(), (2.0 * j * t).sin());
            Ok(cb.powi(4) * c2 * c2 + s2 * s2 * sb.powi(4))
        }
        4 => {
            let a = C64::from_polar(2.0 * (4.0 * b * t).cos(), -4.0 * j * t)
                + 8.0 * (2.0 * b * t).cos()
                + 4.0
                + C64::from_polar(2.0, 4.0 * j * t);
            Ok((a / 16.0).norm_sqr())
        }
        other => Err(Error::domain("sites", format!("closed form exists for L = 2 or 4 only, got {other}"))),
    }
}

/// Result of a free-evolution time search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauKOptimum {
    pub tau_k_opt: f64,
    pub e_a_min: f64,
    /// `(tau_k, E_A)` on the uniform grid.
    pub scan: Vec<(f64, f64)>,
}

/// Scan window covering one period of `E_A(tau_k)`: `pi / (2|J|)` for the
/// transverse model, `2 pi` for the longitudinal one.
pub fn default_window(spec: &ModelSpec) -> f64 {
    match spec.kind {
        ModelKind::Tim => PI / (2.0 * spec.coupling.abs()),
        ModelKind::Ltim => 2.0 * PI,
    }
}

/// Golden-section minimization on `[a, b]` down to a bracket of width `tol`.
pub fn golden_section<F>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

fn check_scan(window: f64, grid_points: usize) -> Result<()> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::domain("window", format!("must be finite and > 0, got {window}")));
    }
    if grid_points < MIN_GRID_POINTS {
        return Err(Error::domain("grid_points", format!("need at least {MIN_GRID_POINTS}, got {grid_points}")));
    }
    Ok(())
}

/// Pick the grid minimum, earliest on ties, then polish it inside the
/// neighbouring cells.
fn refine<F>(f: F, step: f64, values: Vec<f64>) -> Result<TauKOptimum>
where
    F: Fn(f64) -> Result<f64>,
{
    let lowest = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !lowest.is_finite() {
        return Err(Error::InvalidParams("energy scan produced a non-finite value".into()));
    }
    let tie = 1e-10 * (1.0 + lowest.abs());
    let best = values.iter().position(|&v| v <= lowest + tie).unwrap_or(0);
    let last = values.len() - 1;
    let lo = best.saturating_sub(1) as f64 * step;
    let hi = (best + 1).min(last) as f64 * step;
    let (t, e) = golden_section(&f, lo, hi, REFINE_TOL)?;
    let (tau_k_opt, e_a_min) = if e < values[best] { (t, e) } else { (best as f64 * step, values[best]) };
    let scan = values.into_iter().enumerate().map(|(n, v)| (n as f64 * step, v)).collect();
    Ok(TauKOptimum {
        tau_k_opt,
        e_a_min,
        scan,
    })
}

/// Minimize `E_A(tau_k)` over `[0, window]`.
///
/// The state at A' is reused: the grid comes from
/// [`PreparedCycle::energy_on_grid`] and only the refinement evaluates
/// single points.
pub fn optimize_tau_k(prepared: &dyn PreparedCycle, window: f64, grid_points: usize) -> Result<TauKOptimum> {
    check_scan(window, grid_points)?;
    let step = window / (grid_points - 1) as f64;
    let values = prepared.energy_on_grid(step, grid_points)?;
    refine(|t| prepared.energy_at_a(t), step, values)
}

/// Same search for any scalar function of `tau_k`, such as a closed form.
pub fn optimize_function<F>(f: F, window: f64, grid_points: usize) -> Result<TauKOptimum>
where
    F: Fn(f64) -> Result<f64>,
{
    check_scan(window, grid_points)?;
    let step = window / (grid_points - 1) as f64;
    let values = (0..grid_points).map(|n| f(n as f64 * step)).collect::<Result<Vec<_>>>()?;
    refine(f, step, values)
}

/// Prepare the exact real-space cycle and optimize `tau_k` on it.
pub fn tau_k_optimizer(
    spec: &ModelSpec,
    params: &CycleParams,
    window: f64,
    grid_points: usize,
) -> Result<TauKOptimum> {
    check_scan(window, grid_points)?;
    optimize_tau_k(&DenseCycle::prepare(spec, params)?, window, grid_points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle::run_cycle_adiabatic;
    use crate::linalg::{eigh, expectation, gibbs_state, DensityOperator};
    use proptest::prelude::*;

    /// `|<+...+| exp(-i H0 t) |+...+>|^2` by summing over `z` configurations.
    fn brute_return_probability(spec: &ModelSpec, t: f64) -> f64 {
        let diag = spec.diagonal_energies();
        let a: C64 = diag.iter().map(|&e| C64::from_polar(1.0, -e * t)).sum();
        (a / diag.len() as f64).norm_sqr()
    }

    #[test]
    fn coefficients_match_direct_formula() {
        let (h1, h2, j, t) = (10.0f64, 0.1f64, 1.0f64, 0.7f64);
        let (r1, r2) = (h1.hypot(j), h2.hypot(j));
        let den = (2.0 * j / t).cosh() + (2.0 * r2 / t).cosh();
        let c = two_spin_coefficients(h1, h2, j, t).unwrap();
        assert!((c.alpha - h1 * (2.0 * r2 / t).sinh() / (2.0 * r1 * den)).abs() < 1e-14);
        assert!((c.delta - -(2.0 * j / t).sinh() / (2.0 * den)).abs() < 1e-14);
        assert!(c.alpha > 0.0 && c.delta < 0.0);
    }

    #[test]
    fn coefficients_survive_tiny_temperatures() {
        let c = two_spin_coefficients(10.0, 0.1, 1.0, 1e-4).unwrap();
        let zero = two_spin_coefficients(10.0, 0.1, 1.0, 0.0).unwrap();
        assert!(c.alpha.is_finite() && c.delta.is_finite());
        assert!((zero.alpha - 10.0 / (2.0 * 101f64.sqrt())).abs() < 1e-15);
        assert_eq!(zero.delta, 0.0);
        assert!((c.alpha - zero.alpha).abs() < 1e-12);
        assert!(c.delta.abs() < 1e-12);
    }

    #[test]
    fn zero_cold_field_splits_ground_weight() {
        // h2 = 0 makes -2r and -2J degenerate, so each takes half.
        let c = two_spin_coefficients(10.0, 0.0, 1.0, 0.0).unwrap();
        assert!((c.alpha - 10.0 / (4.0 * 101f64.sqrt())).abs() < 1e-15);
        assert_eq!(c.delta, -0.25);
        let warm = two_spin_coefficients(10.0, 0.0, 1.0, 1e-3).unwrap();
        assert!((warm.delta - -0.25).abs() < 1e-12);
    }

    #[test]
    fn coefficient_domain_errors() {
        assert!(two_spin_coefficients(10.0, 0.1, 1.0, -1.0).is_err());
        assert!(two_spin_coefficients(10.0, 0.1, 0.0, 1.0).is_err());
        assert!(two_spin_coefficients(f64::NAN, 0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn aprime_energy_is_boltzmann_average_over_levels() {
        // Oracle: cold-bath populations of the h2 levels placed on the h1 levels.
        let (h1, h2, j, t) = (10.0, 0.1, 1.0, 0.01);
        let w = boltzmann_weights(&two_spin_levels(h2, j), t).unwrap();
        let oracle = mean(&w, &two_spin_levels(h1, j));
        let c = two_spin_coefficients(h1, h2, j, t).unwrap();
        assert!((two_spin_energy_aprime(&c, h1, j) - oracle).abs() < 1e-12);
    }

    #[test]
    fn printed_form_at_zero_free_time() {
        let (h1, j) = (10.0, 1.0);
        let c = two_spin_coefficients(h1, 0.1, j, 0.01).unwrap();
        let e0 = two_spin_energy_a(0.0, &c, h1, j);
        let expected = -4.0 * h1 * c.alpha - 4.0 * j * j * c.alpha / h1 * (4.0 * h1).cos() + 4.0 * j * c.delta;
        assert!((e0 - expected).abs() < 1e-13);
        assert!((two_spin_energy_a_exact(0.0, &c, h1, j) - two_spin_energy_aprime(&c, h1, j)).abs() < 1e-13);
    }

    #[test]
    fn exact_form_matches_density_matrix_propagation() {
        // Oracle: Gibbs state at h2 carried level by level to h1 by hand,
        // then conjugated with exp(-i H0 tau).
        let spec = ModelSpec::tim(2);
        let (h1, h2, t) = (3.0, 0.4, 0.2);
        let split = spec.build_split().unwrap();
        let s_lo = eigh(&split.at(h2));
        let s_hi = eigh(&split.at(h1));
        let rho_d = gibbs_state(&split.at(h2), t).unwrap();
        let pops: Vec<f64> = (0..4)
            .map(|i| {
                let v = s_lo.eigenvectors.column(i);
                (v.adjoint() * rho_d.matrix() * v)[(0, 0)].re
            })
            .collect();
        let rho_aprime = DensityOperator::from_ensemble(&pops, &s_hi.eigenvectors).unwrap();
        let c = two_spin_coefficients(h1, h2, 1.0, t).unwrap();
        for tau in [0.0, 0.1, 0.33, 0.9] {
            let rho = crate::cycle::free_evolve(&rho_aprime, &split.h0, tau).unwrap();
            let e = expectation(&split.at(h1), &rho).unwrap();
            assert!((e - two_spin_energy_a_exact(tau, &c, h1, 1.0)).abs() < 1e-11, "tau {tau}");
        }
    }

    #[test]
    fn stationary_points_solve_the_tangent_condition() {
        let (h1, j) = (10.0f64, 1.0f64);
        let c = two_spin_coefficients(h1, 0.1, j, 0.01).unwrap();
        let roots = two_spin_stationary_points(h1, j, PI);
        assert_eq!(roots.len(), 4);
        for &t in &roots {
            let d = (two_spin_energy_a(t + 1e-6, &c, h1, j) - two_spin_energy_a(t - 1e-6, &c, h1, j)) / 2e-6;
            assert!(d.abs() < 1e-6, "derivative {d} at {t}");
        }
        // Large h1 pushes the roots onto multiples of pi/4.
        let big = two_spin_stationary_points(1e6, 1.0, PI);
        assert!(big.len() >= 4);
        for t in big {
            let n = (t / (PI / 4.0)).round();
            assert!((t - n * PI / 4.0).abs() < 1e-6);
        }
    }

    #[test]
    fn optimizer_on_printed_form_lands_on_a_stationary_point() {
        let (h1, j) = (10.0, 1.0);
        let c = two_spin_coefficients(h1, 0.1, j, 0.01).unwrap();
        let opt = optimize_function(|t| Ok(two_spin_energy_a(t, &c, h1, j)), PI / 2.0, 65).unwrap();
        let roots = two_spin_stationary_points(h1, j, PI / 2.0);
        let nearest = roots.iter().map(|r| (r - opt.tau_k_opt).abs()).fold(f64::INFINITY, f64::min);
        assert!(nearest < 1e-3, "{} vs {roots:?}", opt.tau_k_opt);
        assert!(opt.e_a_min <= two_spin_energy_a(0.0, &c, h1, j));
        assert_eq!(opt.scan.len(), 65);
    }

    #[test]
    fn optimizer_breaks_periodic_ties_towards_zero() {
        let opt = optimize_function(|t| Ok((4.0 * t).cos() * -1.0), PI / 2.0, 33).unwrap();
        assert!(opt.tau_k_opt < 1e-3);
        assert!((opt.e_a_min + 1.0).abs() < 1e-12);
    }

    #[test]
    fn optimizer_refines_between_grid_points() {
        let opt = optimize_function(|t| Ok((t - 0.4321).powi(2)), 1.0, 17).unwrap();
        assert!((opt.tau_k_opt - 0.4321).abs() < 1e-4);
        assert!(optimize_function(|t| Ok(t), 1.0, 8).is_err());
        assert!(optimize_function(|t| Ok(t), 0.0, 32).is_err());
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx) = golden_section(|x| Ok((x - 1.3).powi(2) + 2.0), 0.0, 4.0, 1e-8).unwrap();
        assert!((x - 1.3).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-12);
    }

    #[test]
    fn closed_cycle_matches_rank_ordered_engine() {
        let spec = ModelSpec::tim(2);
        for (h2, t_cold, tau_k) in [(0.2, 0.001, 0.0), (0.1, 0.01, 0.3), (0.5, 0.4, 1.1), (0.0, 0.0, 0.2)] {
            let params = CycleParams {
                h2,
                t_cold,
                tau_k,
                ..CycleParams::default()
            };
            let a = two_spin_adiabatic_cycle(1.0, &params).unwrap();
            let b = run_cycle_adiabatic(&spec, &params).unwrap();
            for (x, y) in [(a.e_a, b.e_a), (a.e_b, b.e_b), (a.e_c, b.e_c), (a.e_d, b.e_d), (a.work, b.work)] {
                assert!((x - y).abs() < 1e-10, "{x} vs {y} at h2 {h2}");
            }
            assert_eq!(a.power, Some(0.0));
        }
    }

    #[test]
    fn closed_cycle_agrees_with_coefficient_form() {
        let params = CycleParams {
            h2: 0.1,
            t_cold: 0.01,
            tau_k: 0.27,
            ..CycleParams::default()
        };
        let r = two_spin_adiabatic_cycle(1.0, &params).unwrap();
        let c = two_spin_coefficients(10.0, 0.1, 1.0, 0.01).unwrap();
        assert!((r.e_aprime - two_spin_energy_aprime(&c, 10.0, 1.0)).abs() < 1e-12);
        assert!((r.e_a - two_spin_energy_a_exact(0.27, &c, 10.0, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn tim_probability_special_cases() {
        for t in [0.0, 0.2, 0.7, 1.3, 2.9] {
            let p2 = ground_state_probability_tim(2, 1.0, t).unwrap();
            assert!((p2 - (2.0 * t).cos().powi(2)).abs() < 1e-14);
            let p4 = ground_state_probability_tim(4, 1.0, t).unwrap();
            assert!((p4 - (t.cos().powi(4) + t.sin().powi(4)).powi(2)).abs() < 1e-14);
        }
        assert_eq!(ground_state_probability_tim(6, 1.0, 0.0).unwrap(), 1.0);
        assert!(ground_state_probability_tim(3, 1.0, 0.1).is_err());
    }

    #[test]
    fn tim_probability_matches_brute_force() {
        for l in [2, 4, 6, 8] {
            let spec = ModelSpec::tim(l).with_coupling(0.8);
            for n in 0..40 {
                let t = 0.1 * n as f64;
                let p = ground_state_probability_tim(l, 0.8, t).unwrap();
                assert!((p - brute_return_probability(&spec, t)).abs() < 1e-12, "L {l} t {t}");
            }
        }
    }

    #[test]
    fn ltim_probability_matches_brute_force() {
        for (j, b) in [(1.0, 1.0), (0.7, 1.3), (1.0, 0.0)] {
            for l in [2, 4] {
                let spec = ModelSpec::ltim(l, b).with_coupling(j);
                for n in 0..40 {
                    let t = 0.13 * n as f64;
                    let p = ground_state_probability_ltim(l, j, b, t).unwrap();
                    assert!((p - brute_return_probability(&spec, t)).abs() < 1e-12, "L {l} J {j} B {b} t {t}");
                }
            }
        }
        assert!(ground_state_probability_ltim(6, 1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn dense_optimizer_finds_zero_in_adiabatic_two_spin_cycle() {
        let spec = ModelSpec::tim(2);
        let params = CycleParams {
            h2: 0.1,
            t_cold: 0.01,
            ..CycleParams::default()
        };
        let prepared = DenseCycle::prepare_adiabatic(&spec, &params).unwrap();
        let opt = optimize_tau_k(&prepared, default_window(&spec), 65).unwrap();
        assert!(opt.tau_k_opt < 1e-3, "{}", opt.tau_k_opt);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn tim_probability_is_bounded_and_periodic(l in 1usize..8, j in 0.2f64..3.0, t in 0.0f64..10.0) {
            let l = 2 * l;
            let p = ground_state_probability_tim(l, j, t).unwrap();
            prop_assert!((-1e-15..=1.0 + 1e-12).contains(&p));
            let q = ground_state_probability_tim(l, j, t + PI / j).unwrap();
            prop_assert!((p - q).abs() < 1e-9);
        }

        #[test]
        fn coefficients_stay_finite(h1 in 0.5f64..50.0, h2 in 0.0f64..0.5, j in 0.1f64..3.0, t in 0.0f64..100.0) {
            let c = two_spin_coefficients(h1, h2, j, t).unwrap();
            prop_assert!(c.alpha.is_finite() && c.delta.is_finite());
            prop_assert!(c.alpha >= 0.0 && c.delta <= 0.0);
        }
    }
}
