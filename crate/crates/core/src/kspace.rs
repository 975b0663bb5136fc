//! Free-fermion engine for the periodic transverse-field Ising chain.
//!
//! After a Jordan-Wigner transformation the even-parity sector lives on
//! antiperiodic momenta `k = (2m+1) pi / L` and the odd-parity sector on
//! periodic momenta `k = 2 pi m / L`. Each pair `(k, -k)` with `0 < k < pi`
//! is a four-level system with
//!
//! ```text
//! H_k(h) = [ 2(h + J cos k)  0  0  2J sin k        ]
//!          [ 0               0  0  0               ]
//!          [ 0               0  0  0               ]
//!          [ 2J sin k        0  0  -2(h + J cos k) ]
//! ```
//!
//! and the periodic sector adds the unpaired modes `k = 0` and `k = pi`
//! with `H = diag(-(h + J cos k), h + J cos k)`. Product states over modes
//! mix both fermion parities, so every sector average is projected onto the
//! parity that sector admits; this is what makes the engine exact at finite
//! `L` rather than only in the thermodynamic limit.

use nalgebra::Matrix2;
use rayon::prelude::*;

use crate::cycle::{
    check_tau_k, exponential_schedule, CycleParams, CycleResult, Exponential, PreparedCycle, StageEnergies,
};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, DensityOperator, HermitianOperator, C64, DEGENERACY_TOL, ZERO};

/// Largest chain accepted by the momentum engine.
pub const MAX_KSPACE_SITES: usize = 100_000;

/// The `4 x 4` pair-mode Hamiltonian at `J = 1`, for `0 < k < pi`.
pub fn build_mode_hamiltonian(k: f64, h: f64) -> Result<HermitianOperator> {
    mode_hamiltonian(k, h, 1.0)
}

pub fn mode_hamiltonian(k: f64, h: f64, coupling: f64) -> Result<HermitianOperator> {
    if !(k > 0.0 && k < std::f64::consts::PI) {
        return Err(Error::domain("k", format!("{k} outside (0, pi)")));
    }
    let (a, b) = pair_coefficients(k, h, coupling);
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = C64::new(a, 0.0);
    m[(3, 3)] = C64::new(-a, 0.0);
    m[(0, 3)] = C64::new(b, 0.0);
    m[(3, 0)] = C64::new(b, 0.0);
    HermitianOperator::new(m)
}

/// `(2(h + J cos k), 2J sin k)`.
fn pair_coefficients(k: f64, h: f64, coupling: f64) -> (f64, f64) {
    (2.0 * (h + coupling * k.cos()), 2.0 * coupling * k.sin())
}

/// Fermion boundary condition, which fixes the admitted total parity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FermionSector {
    /// Antiperiodic momenta, even parity.
    Antiperiodic,
    /// Periodic momenta, odd parity.
    Periodic,
}

impl FermionSector {
    fn sign(self) -> f64 {
        match self {
            FermionSector::Antiperiodic => 1.0,
            FermionSector::Periodic => -1.0,
        }
    }

    /// Momenta in `[0, pi]` carried by this sector.
    pub fn momenta(self, sites: usize) -> Vec<f64> {
        let l = sites as f64;
        let pi = std::f64::consts::PI;
        match self {
            FermionSector::Antiperiodic => (0..sites / 2).map(|m| (2 * m + 1) as f64 * pi / l).collect(),
            FermionSector::Periodic => {
                let mut k: Vec<f64> = (1..sites / 2).map(|m| 2.0 * pi * m as f64 / l).collect();
                k.push(0.0);
                k.push(pi);
                k
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Mode {
    /// `(k, -k)` pair: the coherent `{|0>, |k,-k>}` block and the total
    /// weight on the two singly occupied states, which never evolve.
    Pair { k: f64, even: Matrix2<C64>, p_odd: f64 },
    /// `k = 0` or `k = pi`; the Hamiltonian is diagonal at every field.
    Unpaired { k: f64, p_empty: f64, p_occupied: f64 },
}

/// Per-mode thermal data: ground energy and log of the shifted partition sum.
struct ModeThermal {
    mode: Mode,
    e0: f64,
    log_rest: f64,
    /// Smaller of the even and odd parity weights.
    p_minor: f64,
    parity_sign: f64,
}

fn boltzmann_shifted(gaps: &[f64], temperature: f64) -> (Vec<f64>, f64) {
    // gaps are excitation energies >= 0 above the mode ground level.
    let raw: Vec<f64> = if temperature == 0.0 {
        gaps.iter().map(|&g| if g <= DEGENERACY_TOL { 1.0 } else { 0.0 }).collect()
    } else {
        gaps.iter().map(|&g| (-g / temperature).exp()).collect()
    };
    let s: f64 = raw.iter().sum();
    (raw.iter().map(|w| w / s).collect(), s.ln())
}

fn thermal_pair(k: f64, h: f64, coupling: f64, temperature: f64) -> ModeThermal {
    let (a, b) = pair_coefficients(k, h, coupling);
    let omega = a.hypot(b);
    // Levels -omega (even), 0, 0 (odd), +omega (even).
    let (w, log_rest) = boltzmann_shifted(&[0.0, omega, omega, 2.0 * omega], temperature);
    let (p_g, p_o, p_e) = (w[0], w[1] + w[2], w[3]);
    let half = C64::new(0.5 * (p_g + p_e), 0.0);
    let mut even = Matrix2::new(half, ZERO, ZERO, half);
    if omega > 0.0 {
        // Projector onto the upper level is (1 + n.sigma)/2, n = (b, 0, a)/omega.
        let d = 0.5 * (p_e - p_g) / omega;
        even[(0, 0)] += d * a;
        even[(1, 1)] -= d * a;
        even[(0, 1)] += d * b;
        even[(1, 0)] += d * b;
    }
    let p_even = p_g + p_e;
    ModeThermal {
        mode: Mode::Pair { k, even, p_odd: p_o },
        e0: -omega,
        log_rest,
        p_minor: p_even.min(p_o),
        parity_sign: if p_even >= p_o { 1.0 } else { -1.0 },
    }
}

fn thermal_unpaired(k: f64, h: f64, coupling: f64, temperature: f64) -> ModeThermal {
    let c = h + coupling * k.cos();
    let (w, log_rest) = boltzmann_shifted(&[0.0, 2.0 * c.abs()], temperature);
    let (p_empty, p_occupied) = if c >= 0.0 { (w[0], w[1]) } else { (w[1], w[0]) };
    ModeThermal {
        mode: Mode::Unpaired { k, p_empty, p_occupied },
        e0: -c.abs(),
        log_rest,
        p_minor: p_empty.min(p_occupied),
        parity_sign: if p_empty >= p_occupied { 1.0 } else { -1.0 },
    }
}

/// `exp(-i t (a sigma_z + b sigma_x))`.
fn su2_propagator(a: f64, b: f64, t: f64) -> Matrix2<C64> {
    let omega = a.hypot(b);
    let (s, c) = (omega * t).sin_cos();
    let f = if omega > 0.0 { s / omega } else { t };
    Matrix2::new(
        C64::new(c, -f * a),
        C64::new(0.0, -f * b),
        C64::new(0.0, -f * b),
        C64::new(c, f * a),
    )
}

/// Neumaier-compensated sum, insensitive to summation order at the ulp level.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

/// Mode states of one fermion sector.
#[derive(Clone, Debug)]
pub struct ModeEnsemble {
    sites: usize,
    coupling: f64,
    sector: FermionSector,
    modes: Vec<Mode>,
    /// `1 + s prod_k <pi_k>`, conserved by every stroke.
    parity_norm: f64,
    /// Sum of mode ground energies.
    e0: f64,
    /// `sum_k log_rest_k + ln(parity_norm / 2)`.
    log_rest: f64,
}

impl ModeEnsemble {
    /// Product of per-mode Gibbs states at `(h, T)`.
    pub fn thermal(sites: usize, coupling: f64, sector: FermionSector, h: f64, temperature: f64) -> Result<Self> {
        check_sites(sites)?;
        if !(temperature >= 0.0) {
            return Err(Error::domain("temperature", format!("must be >= 0, got {temperature}")));
        }
        // Flipping sigma^z on every other site of an even ring maps J to -J
        // and leaves every energy in the cycle unchanged.
        let coupling = coupling.abs();
        let pi = std::f64::consts::PI;
        let parts: Vec<ModeThermal> = sector
            .momenta(sites)
            .into_par_iter()
            .map(|k| {
                if k == 0.0 || k == pi {
                    thermal_unpaired(k, h, coupling, temperature)
                } else {
                    thermal_pair(k, h, coupling, temperature)
                }
            })
            .collect();
        // |prod <pi_k>| = exp(sum log1p(-2 p_minor)); 1 - |prod| via expm1.
        let log_abs = compensated_sum(parts.iter().map(|p| (-2.0 * p.p_minor).ln_1p()));
        let sign: f64 = parts.iter().map(|p| p.parity_sign).product();
        let parity_norm = if sign * sector.sign() > 0.0 {
            1.0 + log_abs.exp()
        } else {
            -log_abs.exp_m1()
        };
        Ok(Self {
            sites,
            coupling,
            sector,
            e0: compensated_sum(parts.iter().map(|p| p.e0)),
            log_rest: compensated_sum(parts.iter().map(|p| p.log_rest)) + (0.5 * parity_norm).ln(),
            parity_norm,
            modes: parts.into_iter().map(|p| p.mode).collect(),
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn sector(&self) -> FermionSector {
        self.sector
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn momentum(&self, i: usize) -> f64 {
        match self.modes[i] {
            Mode::Pair { k, .. } | Mode::Unpaired { k, .. } => k,
        }
    }

    /// Density operator of mode `i`: `4 x 4` for a pair, `2 x 2` otherwise.
    pub fn density(&self, i: usize) -> DensityOperator {
        match &self.modes[i] {
            Mode::Pair { even, p_odd, .. } => {
                let mut m = CMatrix::zeros(4, 4);
                m[(0, 0)] = even[(0, 0)];
                m[(0, 3)] = even[(0, 1)];
                m[(3, 0)] = even[(1, 0)];
                m[(3, 3)] = even[(1, 1)];
                m[(1, 1)] = C64::new(0.5 * p_odd, 0.0);
                m[(2, 2)] = C64::new(0.5 * p_odd, 0.0);
                DensityOperator::from_matrix_unchecked(m)
            }
            Mode::Unpaired { p_empty, p_occupied, .. } => {
                let mut m = CMatrix::zeros(2, 2);
                m[(0, 0)] = C64::new(*p_empty, 0.0);
                m[(1, 1)] = C64::new(*p_occupied, 0.0);
                DensityOperator::from_matrix_unchecked(m)
            }
        }
    }

    /// Apply the exponentials in order to every mode.
    pub fn evolve(&mut self, schedule: &[Exponential]) {
        let coupling = self.coupling;
        self.modes.par_iter_mut().for_each(|mode| {
            if let Mode::Pair { k, even, .. } = mode {
                for step in schedule {
                    let (a, b) = pair_coefficients(*k, step.field, coupling);
                    let u = su2_propagator(a, b, step.duration);
                    *even = u * *even * u.adjoint();
                }
            }
        });
    }

    /// Free evolution under `H_k(h = 0)`.
    pub fn free_evolve(&mut self, tau: f64) {
        self.evolve(&[Exponential {
            field: 0.0,
            duration: tau,
        }]);
    }

    /// Parity-projected energy `<P H(h) P> / <P>` of this sector.
    pub fn projected_energy(&self, h: f64) -> f64 {
        let n = self.modes.len();
        let mut plain = Vec::with_capacity(n);
        let mut with_parity = Vec::with_capacity(n);
        let mut parity = Vec::with_capacity(n);
        for mode in &self.modes {
            match mode {
                Mode::Pair { k, even, p_odd } => {
                    let (a, b) = pair_coefficients(*k, h, self.coupling);
                    let e = a * (even[(0, 0)].re - even[(1, 1)].re) + 2.0 * b * even[(0, 1)].re;
                    plain.push(e);
                    // H_k vanishes on the odd states, so pi_k H_k = H_k.
                    with_parity.push(e);
                    parity.push(even[(0, 0)].re + even[(1, 1)].re - p_odd);
                }
                Mode::Unpaired { k, p_empty, p_occupied } => {
                    let c = h + self.coupling * k.cos();
                    plain.push(c * (p_occupied - p_empty));
                    with_parity.push(-c * (p_occupied + p_empty));
                    parity.push(p_empty - p_occupied);
                }
            }
        }
        // prod_{q != k} <pi_q> from prefix and suffix products.
        let mut suffix = vec![1.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] * parity[i];
        }
        let mut prefix = 1.0;
        let mut cross = Vec::with_capacity(n);
        for i in 0..n {
            cross.push(with_parity[i] * prefix * suffix[i + 1]);
            prefix *= parity[i];
        }
        let s = self.sector.sign();
        let num = compensated_sum(plain.into_iter().chain(cross.into_iter().map(|c| s * c)));
        num / self.parity_norm
    }

    #[cfg(test)]
    fn permute(&mut self, order: &[usize]) {
        self.modes = order.iter().map(|&i| self.modes[i].clone()).collect();
    }
}

fn check_sites(sites: usize) -> Result<()> {
    if sites < 2 || sites % 2 != 0 {
        return Err(Error::InvalidModel(format!(
            "momentum engine needs an even number of sites >= 2, got {sites}"
        )));
    }
    if sites > MAX_KSPACE_SITES {
        return Err(Error::InvalidModel(format!(
            "{sites} sites exceeds the momentum-engine cap of {MAX_KSPACE_SITES}"
        )));
    }
    Ok(())
}

/// Both sectors of a thermal state and their statistical weights.
#[derive(Clone, Debug)]
struct SectorPair {
    states: [ModeEnsemble; 2],
    weights: [f64; 2],
}

impl SectorPair {
    fn thermal(sites: usize, coupling: f64, h: f64, temperature: f64) -> Result<Self> {
        let ns = ModeEnsemble::thermal(sites, coupling, FermionSector::Antiperiodic, h, temperature)?;
        let r = ModeEnsemble::thermal(sites, coupling, FermionSector::Periodic, h, temperature)?;
        let weights = sector_weights([ns.e0, r.e0], [ns.log_rest, r.log_rest], temperature);
        Ok(Self { states: [ns, r], weights })
    }

    fn evolve(&mut self, schedule: &[Exponential]) {
        self.states.iter_mut().for_each(|s| s.evolve(schedule));
    }

    fn energy(&self, h: f64) -> f64 {
        self.states
            .iter()
            .zip(self.weights)
            .filter(|(_, w)| *w > 0.0)
            .map(|(s, w)| w * s.projected_energy(h))
            .sum()
    }
}

/// Normalized `exp(-e0/T + log_rest)` over the two sectors; at `T = 0`
/// only the admissible sectors with the lowest ground energy survive.
fn sector_weights(e0: [f64; 2], log_rest: [f64; 2], temperature: f64) -> [f64; 2] {
    let logs: [f64; 2] = if temperature > 0.0 {
        [0, 1].map(|i| -e0[i] / temperature + log_rest[i])
    } else {
        let admissible = [0, 1].map(|i| log_rest[i].is_finite());
        let e_min = (0..2)
            .filter(|&i| admissible[i])
            .map(|i| e0[i])
            .fold(f64::INFINITY, f64::min);
        let tol = DEGENERACY_TOL * e_min.abs().max(1.0);
        [0, 1].map(|i| {
            if admissible[i] && e0[i] - e_min <= tol {
                log_rest[i]
            } else {
                f64::NEG_INFINITY
            }
        })
    };
    let top = logs[0].max(logs[1]);
    let raw = logs.map(|l| if l == f64::NEG_INFINITY { 0.0 } else { (l - top).exp() });
    let z = raw[0] + raw[1];
    raw.map(|r| r / z)
}

/// Momentum-space cycle evaluated up to A'.
#[derive(Clone, Debug)]
pub struct KSpaceCycle {
    params: CycleParams,
    stages: StageEnergies,
    aprime: SectorPair,
}

impl KSpaceCycle {
    pub fn prepare(sites: usize, coupling: f64, params: &CycleParams) -> Result<Self> {
        check_sites(sites)?;
        if !coupling.is_finite() || coupling == 0.0 {
            return Err(Error::InvalidModel(format!("coupling J must be finite and nonzero, got {coupling}")));
        }
        params.validate()?;
        let p = params;
        let mut hot = SectorPair::thermal(sites, coupling, p.h1, p.t_hot)?;
        let e_b = hot.energy(p.h1);
        hot.evolve(&exponential_schedule(&p.expansion_ramp()?, p.dt_max, p.integrator)?);
        let e_c = hot.energy(p.h2);

        let mut cold = SectorPair::thermal(sites, coupling, p.h2, p.t_cold)?;
        let e_d = cold.energy(p.h2);
        cold.evolve(&exponential_schedule(&p.compression_ramp()?, p.dt_max, p.integrator)?);
        let e_aprime = cold.energy(p.h1);
        Ok(Self {
            params: *params,
            stages: StageEnergies { e_b, e_c, e_d, e_aprime },
            aprime: cold,
        })
    }

    /// Sector states at A' (antiperiodic first).
    pub fn aprime_sectors(&self) -> (&ModeEnsemble, &ModeEnsemble, [f64; 2]) {
        (&self.aprime.states[0], &self.aprime.states[1], self.aprime.weights)
    }
}

impl PreparedCycle for KSpaceCycle {
    fn params(&self) -> &CycleParams {
        &self.params
    }

    fn stages(&self) -> StageEnergies {
        self.stages
    }

    fn energy_at_a(&self, tau_k: f64) -> Result<f64> {
        check_tau_k(tau_k)?;
        let mut state = self.aprime.clone();
        state.states.iter_mut().for_each(|s| s.free_evolve(tau_k));
        Ok(state.energy(self.params.h1))
    }
}

/// Run the transverse-field cycle on `sites` spins in momentum space, `J = 1`.
pub fn run_cycle_kspace(sites: usize, params: &CycleParams) -> Result<CycleResult> {
    KSpaceCycle::prepare(sites, 1.0, params)?.finish(params.tau_k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle::run_cycle;
    use crate::linalg::{eigh, max_abs};
    use crate::models::ModelSpec;

    fn quick() -> CycleParams {
        CycleParams {
            dt_max: 5e-3,
            ..CycleParams::default()
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn mode_hamiltonian_at_quarter_turn() {
        let h = build_mode_hamiltonian(std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        let m = h.matrix();
        for i in 0..4 {
            assert!(m[(i, i)].norm() < 1e-15);
        }
        assert!((m[(0, 3)].re - 2.0).abs() < 1e-15);
        assert!((m[(3, 0)].re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mode_spectrum_closed_form() {
        for &(k, h) in &[(0.3, 0.2), (1.7, 10.0), (2.9, -0.5)] {
            let s = eigh(&build_mode_hamiltonian(k, h).unwrap()).eigenvalues;
            let r = 2.0 * ((h + f64::cos(k)).powi(2) + f64::sin(k).powi(2)).sqrt();
            for (x, y) in s.iter().zip([-r, 0.0, 0.0, r]) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn strong_field_ground_energy() {
        let h = 1e4;
        let e = eigh(&build_mode_hamiltonian(1.0, h).unwrap()).ground_energy();
        assert!((e + 2.0 * h).abs() < 3.0);
    }

    #[test]
    fn momentum_outside_open_interval_rejected() {
        assert!(build_mode_hamiltonian(0.0, 1.0).is_err());
        assert!(build_mode_hamiltonian(std::f64::consts::PI, 1.0).is_err());
        assert!(build_mode_hamiltonian(-0.1, 1.0).is_err());
    }

    #[test]
    fn antiperiodic_grid() {
        let k = FermionSector::Antiperiodic.momenta(6);
        assert_eq!(k.len(), 3);
        assert!(k.iter().all(|&k| k > 0.0 && k < std::f64::consts::PI));
        assert_eq!(FermionSector::Periodic.momenta(6).len(), 4);
    }

    #[test]
    fn odd_or_tiny_chains_rejected() {
        assert!(run_cycle_kspace(5, &quick()).is_err());
        assert!(run_cycle_kspace(0, &quick()).is_err());
    }

    #[test]
    fn agrees_with_real_space_engine() {
        let cases = [
            (4, 1.0, 0.0, 0.001),
            (6, 1.0, 0.3, 0.001),
            (4, 0.7, 0.2, 0.5),
            (6, -1.0, 0.1, 0.001),
            (2, 1.0, 0.4, 0.0),
            (4, 1.0, 0.3, 0.0),
        ];
        for (l, j, tau_k, t_cold) in cases {
            let params = CycleParams {
                tau_k,
                t_cold,
                ..quick()
            };
            let dense = run_cycle(&ModelSpec::tim(l).with_coupling(j), &params).unwrap();
            let ks = KSpaceCycle::prepare(l, j, &params).unwrap().finish(tau_k).unwrap();
            for (a, b) in [
                (ks.work, dense.work),
                (ks.q_in, dense.q_in),
                (ks.q_out, dense.q_out),
                (ks.efficiency.unwrap(), dense.efficiency.unwrap()),
            ] {
                assert!(rel(a, b) < 1e-9, "L={l} J={j} tau_k={tau_k} T_C={t_cold}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn mode_order_does_not_matter() {
        let params = CycleParams {
            tau_k: 0.2,
            ..quick()
        };
        let prep = KSpaceCycle::prepare(40, 1.0, &params).unwrap();
        let mut state = prep.aprime.clone();
        let base = state.energy(params.h1);
        for s in state.states.iter_mut() {
            let n = s.len();
            let order: Vec<usize> = (0..n).rev().collect();
            s.permute(&order);
        }
        let flipped = state.energy(params.h1);
        assert!((base - flipped).abs() <= 1e-12 * base.abs());
    }

    #[test]
    fn unitary_strokes_preserve_mode_spectra() {
        let mut ens = ModeEnsemble::thermal(10, 1.0, FermionSector::Antiperiodic, 10.0, 100.0).unwrap();
        let before: Vec<(Vec<f64>, f64)> = (0..ens.len())
            .map(|i| (ens.density(i).eigenvalues(), ens.density(i).purity()))
            .collect();
        let p = crate::models::RampProtocol::new(10.0, 0.2, 0.1).unwrap();
        ens.evolve(&exponential_schedule(&p, 1e-3, Default::default()).unwrap());
        ens.free_evolve(0.4);
        for (i, (spec, purity)) in before.iter().enumerate() {
            let rho = ens.density(i);
            assert!(rho.check_invariants().is_ok());
            assert!((rho.purity() - purity).abs() < 1e-9);
            for (a, b) in rho.eigenvalues().iter().zip(spec) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mode_density_is_thermal_state_of_mode_hamiltonian() {
        let (h, t) = (0.4, 0.7);
        let ens = ModeEnsemble::thermal(10, 1.0, FermionSector::Antiperiodic, h, t).unwrap();
        for i in 0..ens.len() {
            let hk = build_mode_hamiltonian(ens.momentum(i), h).unwrap();
            let want = crate::linalg::gibbs_state(&hk, t).unwrap();
            assert!(max_abs(&(ens.density(i).matrix() - want.matrix())) < 1e-12);
        }
    }

    #[test]
    fn work_per_site_converges_with_size() {
        let w = |l: usize| run_cycle_kspace(l, &quick()).unwrap().work / l as f64;
        assert!((w(50) - w(100)).abs() < 1e-3);
    }
}
