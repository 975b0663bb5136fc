//! Exact real-space engine.
//!
//! Mixed states are kept as weighted ensembles of orthonormal vectors inside
//! each momentum block, `rho = sum_i p_i |v_i><v_i|`. A ramp then costs one
//! propagation per ensemble member, and a cold Gibbs state of rank one or two
//! is propagated as cheaply as a pure state.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_tau_k, exponential_schedule, CycleParams, CycleResult, Exponential, Integrator, PreparedCycle,
    StageEnergies,
};
use crate::error::{Error, Result};
use crate::linalg::{
    boltzmann_weights, eigh, expm_action, propagator, DensityOperator, FieldOperator, HermitianOperator, MultiVector,
    Spectrum, C64, DEGENERACY_TOL,
};
use crate::models::{ModelSpec, RampProtocol, SplitHamiltonian};
use crate::sectors::SectorDecomposition;

/// Ensemble members lighter than this are dropped.
pub const WEIGHT_CUTOFF: f64 = 1e-20;

#[derive(Clone, Debug)]
struct Ensemble {
    weights: Vec<f64>,
    vectors: MultiVector,
}

fn block_spectra(dec: &SectorDecomposition, field: f64) -> Vec<Spectrum> {
    dec.blocks().par_iter().map(|b| eigh(&b.dense(field))).collect()
}

fn concat_levels(spectra: &[Spectrum]) -> Vec<f64> {
    spectra.iter().flat_map(|s| s.eigenvalues.iter().copied()).collect()
}

/// Ensembles built from eigenvectors with globally normalized weights.
fn ensembles_from(spectra: &[Spectrum], weights: &[f64]) -> Vec<Ensemble> {
    let mut offset = 0;
    spectra
        .iter()
        .map(|s| {
            let n = s.eigenvalues.len();
            let w = &weights[offset..offset + n];
            offset += n;
            let keep: Vec<usize> = (0..n).filter(|&i| w[i] > WEIGHT_CUTOFF).collect();
            Ensemble {
                weights: keep.iter().map(|&i| w[i]).collect(),
                vectors: MultiVector::from_columns(&s.eigenvectors).select_columns(&keep),
            }
        })
        .collect()
}

fn thermal(dec: &SectorDecomposition, field: f64, temperature: f64) -> Result<(Vec<Ensemble>, f64)> {
    let spectra = block_spectra(dec, field);
    let levels = concat_levels(&spectra);
    let w = boltzmann_weights(&levels, temperature)?;
    let energy = levels.iter().zip(&w).map(|(e, p)| e * p).sum();
    Ok((ensembles_from(&spectra, &w), energy))
}

fn ramp(dec: &SectorDecomposition, ens: &mut [Ensemble], schedule: &[Exponential]) {
    dec.blocks().par_iter().zip(ens.par_iter_mut()).for_each(|(b, e)| {
        for step in schedule {
            expm_action(&b.at(step.field), step.duration, &mut e.vectors);
        }
    });
}

fn energy(dec: &SectorDecomposition, ens: &[Ensemble], field: f64) -> f64 {
    let parts: Vec<f64> = dec
        .blocks()
        .par_iter()
        .zip(ens.par_iter())
        .map(|(b, e)| b.at(field).weighted_expectation(&e.vectors, &e.weights))
        .collect();
    parts.iter().sum()
}

fn phases(h0: &[f64], tau: f64) -> Vec<C64> {
    h0.iter().map(|&e| C64::from_polar(1.0, -e * tau)).collect()
}

/// Real-space cycle evaluated up to A'.
#[derive(Clone, Debug)]
pub struct DenseCycle {
    params: CycleParams,
    dec: SectorDecomposition,
    stages: StageEnergies,
    aprime: Vec<Ensemble>,
    quasi_static: bool,
}

impl DenseCycle {
    /// Finite-time ramps, integrated numerically in momentum blocks.
    pub fn prepare(spec: &ModelSpec, params: &CycleParams) -> Result<Self> {
        let dec = momentum_blocks(spec, params)?;
        Self::prepare_in(dec, params)
    }

    /// Same as [`DenseCycle::prepare`] on a caller-supplied block structure.
    pub fn prepare_in(dec: SectorDecomposition, params: &CycleParams) -> Result<Self> {
        params.validate()?;
        let p = params;
        let (mut ens, e_b) = thermal(&dec, p.h1, p.t_hot)?;
        let expansion = exponential_schedule(&p.expansion_ramp()?, p.dt_max, p.integrator)?;
        ramp(&dec, &mut ens, &expansion);
        let e_c = energy(&dec, &ens, p.h2);

        let (mut ens, e_d) = thermal(&dec, p.h2, p.t_cold)?;
        let compression = exponential_schedule(&p.compression_ramp()?, p.dt_max, p.integrator)?;
        ramp(&dec, &mut ens, &compression);
        let e_aprime = energy(&dec, &ens, p.h1);

        Ok(Self {
            params: *params,
            dec,
            stages: StageEnergies { e_b, e_c, e_d, e_aprime },
            aprime: ens,
            quasi_static: false,
        })
    }

    /// Quasi-static ramps: every eigenstate of a block is carried to the
    /// eigenstate of the same rank in that block. This is exact as long as
    /// no two levels of one block cross between `h2` and `h1`, which holds
    /// for the two-site chain but not in general. Durations in `params` only
    /// matter through `tau_k`; the cycle time is infinite.
    pub fn prepare_adiabatic(spec: &ModelSpec, params: &CycleParams) -> Result<Self> {
        let dec = momentum_blocks(spec, params)?;
        params.validate()?;
        let p = params;
        let s1 = block_spectra(&dec, p.h1);
        let s2 = block_spectra(&dec, p.h2);
        let l1 = concat_levels(&s1);
        let l2 = concat_levels(&s2);
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let w_b = boltzmann_weights(&l1, p.t_hot)?;
        let w_d = boltzmann_weights(&l2, p.t_cold)?;
        let stages = StageEnergies {
            e_b: dot(&w_b, &l1),
            e_c: dot(&w_b, &l2),
            e_d: dot(&w_d, &l2),
            e_aprime: dot(&w_d, &l1),
        };
        Ok(Self {
            params: *params,
            aprime: ensembles_from(&s1, &w_d),
            dec,
            stages,
            quasi_static: true,
        })
    }

    /// Full-space density operator at A after free evolution for `tau_k`.
    pub fn density_at_a(&self, tau_k: f64) -> Result<DensityOperator> {
        check_tau_k(tau_k)?;
        let mut weights = Vec::new();
        let mut columns: Vec<Vec<C64>> = Vec::new();
        for (b, e) in self.dec.blocks().iter().zip(&self.aprime) {
            let mut v = e.vectors.clone();
            v.scale_rows(&phases(&b.h0, tau_k));
            for c in 0..v.width() {
                columns.push(b.embed(&v.column(c)));
                weights.push(e.weights[c]);
            }
        }
        let dim = columns.first().map_or(0, Vec::len);
        let vecs = crate::linalg::CMatrix::from_fn(dim, columns.len(), |i, c| columns[c][i]);
        DensityOperator::from_ensemble(&weights, &vecs)
    }

    /// Number of vectors carried from D onwards.
    pub fn ensemble_size(&self) -> usize {
        self.aprime.iter().map(|e| e.weights.len()).sum()
    }
}

fn momentum_blocks(spec: &ModelSpec, params: &CycleParams) -> Result<SectorDecomposition> {
    params.validate()?;
    let split = spec.sparse_split()?;
    SectorDecomposition::momentum(&split, spec.sites)
}

impl PreparedCycle for DenseCycle {
    fn params(&self) -> &CycleParams {
        &self.params
    }

    fn stages(&self) -> StageEnergies {
        self.stages
    }

    fn cycle_time(&self, tau_k: f64) -> f64 {
        if self.quasi_static {
            f64::INFINITY
        } else {
            self.params.base_time() + tau_k
        }
    }

    fn energy_at_a(&self, tau_k: f64) -> Result<f64> {
        check_tau_k(tau_k)?;
        let h1 = self.params.h1;
        let parts: Vec<f64> = self
            .dec
            .blocks()
            .par_iter()
            .zip(self.aprime.par_iter())
            .map(|(b, e)| {
                let mut v = e.vectors.clone();
                v.scale_rows(&phases(&b.h0, tau_k));
                b.at(h1).weighted_expectation(&v, &e.weights)
            })
            .collect();
        Ok(parts.iter().sum())
    }

    fn energy_on_grid(&self, step: f64, points: usize) -> Result<Vec<f64>> {
        check_tau_k(step)?;
        let h1 = self.params.h1;
        let per_block: Vec<Vec<f64>> = self
            .dec
            .blocks()
            .par_iter()
            .zip(self.aprime.par_iter())
            .map(|(b, e)| {
                let advance = phases(&b.h0, step);
                let op = b.at(h1);
                let mut v = e.vectors.clone();
                (0..points)
                    .map(|_| {
                        let val = op.weighted_expectation(&v, &e.weights);
                        v.scale_rows(&advance);
                        val
                    })
                    .collect()
            })
            .collect();
        Ok((0..points).map(|n| per_block.iter().map(|p| p[n]).sum()).collect())
    }
}

/// Run the cycle with the exact real-space engine.
pub fn run_cycle(spec: &ModelSpec, params: &CycleParams) -> Result<CycleResult> {
    DenseCycle::prepare(spec, params)?.finish(params.tau_k)
}

/// Run the cycle with quasi-static ramps (see [`DenseCycle::prepare_adiabatic`]).
pub fn run_cycle_adiabatic(spec: &ModelSpec, params: &CycleParams) -> Result<CycleResult> {
    DenseCycle::prepare_adiabatic(spec, params)?.finish(params.tau_k)
}

/// Zero-temperature variant that carries the single ground state of
/// `H(h2)` from D onwards as a state vector in the full product basis.
///
/// Requires `T_C = 0`. With a degenerate ground level the Gibbs state at D
/// is mixed, and the call falls back to [`run_cycle`].
pub fn run_cycle_statevector(spec: &ModelSpec, params: &CycleParams) -> Result<CycleResult> {
    params.validate()?;
    if params.t_cold != 0.0 {
        return Err(Error::InvalidParams(format!(
            "state-vector engine needs T_C = 0, got {}",
            params.t_cold
        )));
    }
    let p = params;
    let split = spec.sparse_split()?;
    let dec = SectorDecomposition::momentum(&split, spec.sites)?;

    let (mut ens, e_b) = thermal(&dec, p.h1, p.t_hot)?;
    let expansion = exponential_schedule(&p.expansion_ramp()?, p.dt_max, p.integrator)?;
    ramp(&dec, &mut ens, &expansion);
    let e_c = energy(&dec, &ens, p.h2);
    drop(ens);

    let spectra = block_spectra(&dec, p.h2);
    let mut ground: Option<(usize, f64)> = None;
    for (i, s) in spectra.iter().enumerate() {
        if ground.map_or(true, |(_, e)| s.eigenvalues[0] < e) {
            ground = Some((i, s.eigenvalues[0]));
        }
    }
    let (gb, e_d) = ground.expect("at least one block");
    let levels = concat_levels(&spectra);
    let scale = levels.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let multiplicity = levels.iter().filter(|&&e| e - e_d <= DEGENERACY_TOL * scale).count();
    if multiplicity > 1 {
        return run_cycle(spec, params);
    }
    let psi0: Vec<C64> = spectra[gb].eigenvectors.column(0).iter().copied().collect();
    let mut psi = MultiVector::from_vector(&dec.blocks()[gb].embed(&psi0));

    let compression = exponential_schedule(&p.compression_ramp()?, p.dt_max, p.integrator)?;
    for step in &compression {
        expm_action(&split.at(step.field), step.duration, &mut psi);
    }
    let e_aprime = split.at(p.h1).weighted_expectation(&psi, &[1.0]);
    psi.scale_rows(&phases(&split.h0, p.tau_k));
    let e_a = split.at(p.h1).weighted_expectation(&psi, &[1.0]);

    let stages = StageEnergies { e_b, e_c, e_d, e_aprime };
    Ok(CycleResult::assemble(stages, e_a, p.tau_k, p.base_time() + p.tau_k))
}

/// Integrate `d rho / dt = -i [H(h(t)), rho]` over a ramp.
///
/// `H0` must be diagonal. The state is propagated column by column, first
/// `X = U rho` and then `U X^H = U rho U^H`.
pub fn evolve_ramp(
    rho: &DensityOperator,
    split: &SplitHamiltonian,
    protocol: &RampProtocol,
    dt_max: f64,
    integrator: Integrator,
) -> Result<DensityOperator> {
    if rho.dim() != split.h0.dim() {
        return Err(Error::DimensionMismatch {
            expected: split.h0.dim(),
            found: rho.dim(),
        });
    }
    if !split.h0.is_diagonal() {
        return Err(Error::InvalidModel("ramp propagation needs a diagonal H0".into()));
    }
    let diag: Vec<f64> = split.h0.matrix().diagonal().iter().map(|z| z.re).collect();
    let coupling = split.h1.to_sparse();
    let schedule = exponential_schedule(protocol, dt_max, integrator)?;
    let apply = |x: &mut MultiVector| {
        for step in &schedule {
            let op = FieldOperator::new(&diag, &coupling, step.field).expect("dimensions checked");
            expm_action(&op, step.duration, x);
        }
    };
    let mut x = MultiVector::from_columns(rho.matrix());
    apply(&mut x);
    let mut y = MultiVector::from_columns(&x.to_matrix().adjoint());
    apply(&mut y);
    Ok(DensityOperator::from_matrix_unchecked(y.to_matrix()))
}

/// `rho -> U rho U^H` with `U = exp(-i H0 tau_k)`.
pub fn free_evolve(rho: &DensityOperator, h0: &HermitianOperator, tau_k: f64) -> Result<DensityOperator> {
    check_tau_k(tau_k)?;
    if rho.dim() != h0.dim() {
        return Err(Error::DimensionMismatch {
            expected: h0.dim(),
            found: rho.dim(),
        });
    }
    if h0.is_diagonal() {
        let p: Vec<C64> = phases(
            &h0.matrix().diagonal().iter().map(|z| z.re).collect::<Vec<_>>(),
            tau_k,
        );
        let m = rho.matrix();
        let out = crate::linalg::CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| p[i] * m[(i, j)] * p[j].conj());
        return Ok(DensityOperator::from_matrix_unchecked(out));
    }
    rho.conjugate(&propagator(h0, tau_k))
}

/// Energy changes from halving `dt_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub dt_max: f64,
    /// Largest change over `E_A, E_A', E_B, E_C, E_D`.
    pub max_energy_change: f64,
}

/// Rerun at `dt_max / 2` and report the largest energy change.
pub fn convergence_check(spec: &ModelSpec, params: &CycleParams) -> Result<ConvergenceReport> {
    let coarse = run_cycle(spec, params)?;
    let mut fine_params = *params;
    fine_params.dt_max = params.dt_max / 2.0;
    let fine = run_cycle(spec, &fine_params)?;
    let pairs = [
        (coarse.e_a, fine.e_a),
        (coarse.e_aprime, fine.e_aprime),
        (coarse.e_b, fine.e_b),
        (coarse.e_c, fine.e_c),
        (coarse.e_d, fine.e_d),
    ];
    Ok(ConvergenceReport {
        dt_max: params.dt_max,
        max_energy_change: pairs.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expectation, gibbs_state, max_abs};

    fn quick_params() -> CycleParams {
        CycleParams {
            dt_max: 5e-3,
            ..CycleParams::default()
        }
    }

    #[test]
    fn tau_k_zero_gives_a_equal_to_aprime() {
        let prep = DenseCycle::prepare(&ModelSpec::tim(4), &quick_params()).unwrap();
        let r = prep.finish(0.0).unwrap();
        assert_eq!(r.e_a, r.e_aprime);
        assert_eq!(r.free_gain, 0.0);
        assert_eq!(r.tau_total, 0.4);
    }

    #[test]
    fn block_engine_matches_dense_matrix_propagation() {
        // Independent route: full 2^L density matrices, full Gibbs states
        // and the DensityOperator-level ramp and free evolution.
        let spec = ModelSpec::ltim(4, 1.0);
        let params = CycleParams {
            tau_k: 0.37,
            t_cold: 0.3,
            ..quick_params()
        };
        let split = spec.build_split().unwrap();
        let rho_b = gibbs_state(&split.at(params.h1), params.t_hot).unwrap();
        let rho_c = evolve_ramp(
            &rho_b,
            &split,
            &params.expansion_ramp().unwrap(),
            params.dt_max,
            params.integrator,
        )
        .unwrap();
        let rho_d = gibbs_state(&split.at(params.h2), params.t_cold).unwrap();
        let rho_ap = evolve_ramp(
            &rho_d,
            &split,
            &params.compression_ramp().unwrap(),
            params.dt_max,
            params.integrator,
        )
        .unwrap();
        let rho_a = free_evolve(&rho_ap, &split.h0, params.tau_k).unwrap();
        let e = |h: f64, r: &DensityOperator| expectation(&split.at(h), r).unwrap();

        let prep = DenseCycle::prepare(&spec, &params).unwrap();
        let got = prep.finish(params.tau_k).unwrap();
        assert!((got.e_b - e(params.h1, &rho_b)).abs() < 1e-9);
        assert!((got.e_c - e(params.h2, &rho_c)).abs() < 1e-9);
        assert!((got.e_d - e(params.h2, &rho_d)).abs() < 1e-9);
        assert!((got.e_aprime - e(params.h1, &rho_ap)).abs() < 1e-9);
        assert!((got.e_a - e(params.h1, &rho_a)).abs() < 1e-9);
        let rho_a_blocks = prep.density_at_a(params.tau_k).unwrap();
        assert!(max_abs(&(rho_a_blocks.matrix() - rho_a.matrix())) < 1e-9);
    }

    #[test]
    fn grid_scan_matches_pointwise_evaluation() {
        let prep = DenseCycle::prepare(&ModelSpec::tim(5), &quick_params()).unwrap();
        let step = 0.05;
        let grid = prep.energy_on_grid(step, 12).unwrap();
        for (n, g) in grid.iter().enumerate() {
            let direct = prep.energy_at_a(n as f64 * step).unwrap();
            assert!((g - direct).abs() < 1e-11);
        }
    }

    #[test]
    fn statevector_matches_block_engine_at_zero_temperature() {
        let params = CycleParams {
            t_cold: 0.0,
            tau_k: 0.3,
            ..quick_params()
        };
        for spec in [ModelSpec::tim(6), ModelSpec::ltim(5, 1.0)] {
            let a = run_cycle(&spec, &params).unwrap();
            let b = run_cycle_statevector(&spec, &params).unwrap();
            for (x, y) in [(a.e_a, b.e_a), (a.e_aprime, b.e_aprime), (a.e_d, b.e_d), (a.work, b.work)] {
                assert!((x - y).abs() < 1e-8, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn statevector_requires_zero_cold_temperature() {
        assert!(matches!(
            run_cycle_statevector(&ModelSpec::tim(2), &quick_params()),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn statevector_falls_back_on_degenerate_ground() {
        // LTIM with B = 0 and antiferromagnetic coupling: at h2 = 0 the two
        // Neel states are degenerate.
        let spec = ModelSpec::ltim(4, 0.0);
        let params = CycleParams {
            h2: 0.0,
            t_cold: 0.0,
            tau_k: 0.2,
            ..quick_params()
        };
        let a = run_cycle(&spec, &params).unwrap();
        let b = run_cycle_statevector(&spec, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_spin_adiabatic_free_evolution_state() {
        // At T_C = 0 and h1 -> infinity the state at A' is |++> and free
        // evolution gives cos(2J t)|++> + i sin(2J t)|-->.
        let spec = ModelSpec::tim(2);
        let tau = 0.3;
        let params = CycleParams {
            h1: 1e7,
            t_cold: 0.0,
            tau_k: tau,
            ..quick_params()
        };
        let prep = DenseCycle::prepare_adiabatic(&spec, &params).unwrap();
        let rho = prep.density_at_a(tau).unwrap();
        let plus = [0.5, 0.5, 0.5, 0.5].map(|x| C64::new(x, 0.0));
        let minus = [0.5, -0.5, -0.5, 0.5].map(|x| C64::new(x, 0.0));
        let (c, s) = ((2.0 * tau).cos(), (2.0 * tau).sin());
        let psi: Vec<C64> = (0..4).map(|i| plus[i] * c + C64::new(0.0, s) * minus[i]).collect();
        let v = nalgebra::DVector::from_vec(psi);
        let want = &v * v.adjoint();
        assert!(max_abs(&(rho.matrix() - want)) < 1e-6);
    }

    #[test]
    fn constant_ramp_leaves_gibbs_state_unchanged() {
        let split = ModelSpec::tim(3).build_split().unwrap();
        let rho = gibbs_state(&split.at(0.8), 1.3).unwrap();
        let p = RampProtocol::new(0.8, 0.8, 1.0).unwrap();
        let out = evolve_ramp(&rho, &split, &p, 1e-2, Integrator::Midpoint).unwrap();
        assert!(max_abs(&(out.matrix() - rho.matrix())) < 1e-9);
    }

    #[test]
    fn slow_ramp_follows_ground_state() {
        let split = ModelSpec::tim(4).build_split().unwrap();
        let rho = gibbs_state(&split.at(2.0), 0.0).unwrap();
        let p = RampProtocol::new(2.0, 0.5, 50.0).unwrap();
        let out = evolve_ramp(&rho, &split, &p, 1e-2, Integrator::Magnus4).unwrap();
        let g = eigh(&split.at(0.5)).eigenvectors.column(0).into_owned();
        let overlap = (g.adjoint() * out.matrix() * &g)[(0, 0)].re;
        assert!(overlap >= 0.999, "overlap {overlap}");
    }

    #[test]
    fn free_evolution_trivial_cases() {
        let split = ModelSpec::tim(3).build_split().unwrap();
        let rho = gibbs_state(&split.at(1.0), 0.5).unwrap();
        let same = free_evolve(&rho, &split.h0, 0.0).unwrap();
        assert!(max_abs(&(same.matrix() - rho.matrix())) < 1e-15);
        let diag = gibbs_state(&split.h0, 0.7).unwrap();
        let out = free_evolve(&diag, &split.h0, 1.7).unwrap();
        assert!(max_abs(&(out.matrix() - diag.matrix())) < 1e-15);
        assert!(free_evolve(&rho, &split.h0, -1.0).is_err());
    }

    #[test]
    fn magnus_converges_faster_than_midpoint() {
        let spec = ModelSpec::tim(3);
        let base = CycleParams {
            dt_max: 1e-2,
            ..CycleParams::default()
        };
        let change = |integrator| {
            convergence_check(&spec, &CycleParams { integrator, ..base })
                .unwrap()
                .max_energy_change
        };
        assert!(change(Integrator::Magnus4) < 1e-2 * change(Integrator::Midpoint));
    }
}
